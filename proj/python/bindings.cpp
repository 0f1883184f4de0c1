#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <tuple>
#include <vector>

#include "paraembed/corpus.hpp"
#include "paraembed/eval.hpp"
#include "paraembed/io.hpp"
#include "paraembed/model.hpp"
#include "paraembed/parallel.hpp"
#include "paraembed/tokenizer.hpp"
#include "paraembed/tools.hpp"
#include "paraembed/trainer.hpp"

namespace py = pybind11;
using namespace paraembed;

namespace {

py::array_t<float> to_numpy(Matrix m) {
  py::array_t<float> out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

Side parse_side(const std::string& s) {
  if (s == "source") return Side::kSource;
  if (s == "target") return Side::kTarget;
  throw py::value_error("side must be 'source' or 'target'");
}

std::vector<RawPair> to_pairs(const std::vector<std::tuple<std::string, std::string>>& pairs) {
  std::vector<RawPair> out;
  out.reserve(pairs.size());
  for (const auto& [s, t] : pairs) out.push_back(RawPair{s, t, std::nullopt});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Paraphrastic sentence embeddings";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  m.def("normalize", &normalize, py::arg("text"));
  m.def("set_num_threads", &set_num_threads, py::arg("n"));
  m.def("num_threads", &num_threads);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def("__len__", &Vocabulary::size)
      .def("encode", &Vocabulary::encode, py::arg("text"))
      .def("decode", [](const Vocabulary& v, const std::vector<TokenId>& ids) { return v.decode(ids); }, py::arg("ids"))
      .def("token", &Vocabulary::token, py::arg("id"))
      .def("id_of", &Vocabulary::id_of, py::arg("token"))
      .def("__contains__", &Vocabulary::contains)
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def_property_readonly("num_merges", [](const Vocabulary& v) { return v.merges().size(); })
      .def("serialize", &Vocabulary::serialize)
      .def_static("deserialize", &Vocabulary::deserialize, py::arg("text"))
      .def("save", &Vocabulary::save, py::arg("path"))
      .def_static("load", &Vocabulary::load, py::arg("path"))
      .def("__eq__", [](const Vocabulary& a, const Vocabulary& b) { return a == b; });

  m.def(
      "train_vocab",
      [](const std::vector<std::string>& corpus, std::size_t size) { return train_vocab(corpus, size); },
      py::arg("corpus"), py::arg("vocab_size"), py::call_guard<py::gil_scoped_release>());

  py::class_<EmbeddingModel>(m, "EmbeddingModel")
      .def_static("initialized", &EmbeddingModel::initialized, py::arg("vocab"), py::arg("dim"), py::arg("seed"),
                  py::arg("tied") = true)
      .def_property_readonly("vocab", &EmbeddingModel::vocab, py::return_value_policy::reference_internal)
      .def_property_readonly("dim", &EmbeddingModel::dim)
      .def_property_readonly("vocab_size", &EmbeddingModel::vocab_size)
      .def_property_readonly("tied", &EmbeddingModel::tied)
      .def_property_readonly(
          "parameters",
          [](py::object self) {
            auto& model = self.cast<EmbeddingModel&>();
            auto p = model.parameters();
            const py::ssize_t rows = static_cast<py::ssize_t>(model.num_tables() * model.vocab_size());
            return py::array_t<float>({rows, static_cast<py::ssize_t>(model.dim())}, p.data(), self);
          },
          "Writable (tables x V) x d view of the embedding table")
      .def(
          "embed",
          [](const EmbeddingModel& model, const std::vector<std::string>& sentences, const std::string& side,
             std::size_t batch_size) {
            Matrix out;
            {
              py::gil_scoped_release release;
              out = embed_batch(model, sentences, parse_side(side), batch_size);
            }
            return to_numpy(std::move(out));
          },
          py::arg("sentences"), py::arg("side") = "source", py::arg("batch_size") = 64)
      .def(
          "score", [](const EmbeddingModel& model, const std::string& s, const std::string& t) { return score_pair(model, s, t); },
          py::arg("s"), py::arg("t"))
      .def("__eq__", [](const EmbeddingModel& a, const EmbeddingModel& b) { return a == b; });

  m.def("load_model", &load_model, py::arg("path"));
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def(
      "score_pair", [](const EmbeddingModel& model, const std::string& s, const std::string& t) { return score_pair(model, s, t); },
      py::arg("model"), py::arg("s"), py::arg("t"));
  m.def(
      "cosine",
      [](const std::vector<float>& u, const std::vector<float>& v) {
        if (u.size() != v.size()) throw py::value_error("cosine: vectors differ in length");
        return cosine(u, v);
      },
      py::arg("u"), py::arg("v"));

  m.def("trigram_overlap", &trigram_overlap, py::arg("s1"), py::arg("s2"));
  m.def("whitespace_token_count", &whitespace_token_count, py::arg("text"));
  m.def(
      "build_dataset",
      [](const std::vector<std::tuple<std::string, std::string>>& pairs, const Vocabulary& vocab, const std::string& path) {
        const auto stats = build_dataset(to_pairs(pairs), vocab, path);
        return std::make_tuple(stats.written, stats.skipped_empty);
      },
      py::arg("pairs"), py::arg("vocab"), py::arg("path"), "Returns (written, skipped_empty)");
  m.def(
      "dataset_size", [](const std::string& path) { return DatasetFile(path).count(); }, py::arg("path"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("dim", &TrainConfig::dim)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("margin", &TrainConfig::margin)
      .def_readwrite("anneal_rate", &TrainConfig::anneal_rate)
      .def_readwrite("mega_batch", &TrainConfig::mega_batch)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("dropout", &TrainConfig::dropout)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("bidirectional", &TrainConfig::bidirectional)
      .def_readwrite("tied", &TrainConfig::tied)
      .def_property(
          "negative_pool",
          [](const TrainConfig& c) { return c.negative_pool == NegativePool::kAnySide ? "any" : "opposing"; },
          [](TrainConfig& c, const std::string& p) {
            if (p == "any") c.negative_pool = NegativePool::kAnySide;
            else if (p == "opposing") c.negative_pool = NegativePool::kOpposingSide;
            else throw py::value_error("negative_pool must be 'any' or 'opposing'");
          })
      .def("validate", &TrainConfig::validate);

  m.def("mega_batch_size_at", &mega_batch_size_at, py::arg("step"), py::arg("config"));
  m.def("margin_loss", &margin_loss, py::arg("f_pos"), py::arg("f_neg"), py::arg("margin"));
  m.def(
      "train",
      [](const TrainConfig& cfg, const std::string& data_path, const Vocabulary& vocab) {
        py::gil_scoped_release release;
        const DatasetFile data(data_path);
        TrainResult result = train(cfg, data, vocab);
        py::gil_scoped_acquire acquire;
        py::list metrics;
        for (const auto& e : result.metrics) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["mean_loss"] = e.mean_loss;
          d["active_fraction"] = e.active_fraction;
          d["mega_batch_size"] = e.mega_batch_size;
          metrics.append(d);
        }
        return py::make_tuple(std::move(result.model), metrics);
      },
      py::arg("config"), py::arg("data_path"), py::arg("vocab"), "Returns (model, per-epoch metrics)");

  m.def(
      "pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); }, py::arg("x"),
      py::arg("y"));
  m.def(
      "eval_sts",
      [](const EmbeddingModel& model, const std::vector<std::tuple<std::string, std::string, double>>& pairs) {
        STSDataset ds{"python", {}};
        for (const auto& [a, b, g] : pairs) ds.pairs.push_back({a, b, g});
        return eval_sts(model, ds);
      },
      py::arg("model"), py::arg("pairs"));
  m.def(
      "mine_bitext",
      [](const EmbeddingModel& model, const std::vector<std::string>& src, const std::vector<std::string>& tgt,
         const std::string& direction) {
        MiningDirection dir;
        if (direction == "src2tgt") dir = MiningDirection::kSourceToTarget;
        else if (direction == "tgt2src") dir = MiningDirection::kTargetToSource;
        else throw py::value_error("direction must be 'src2tgt' or 'tgt2src'");
        const auto r = mine_bitext(model, BitextDataset{src, tgt}, dir);
        return py::make_tuple(r.alignment, r.error_rate);
      },
      py::arg("model"), py::arg("src"), py::arg("tgt"), py::arg("direction") = "src2tgt",
      "Returns (alignment, error_rate)");

  m.def(
      "embed_file",
      [](const EmbeddingModel& model, const std::string& in, const std::string& out, std::size_t batch_size) {
        return embed_file(model, in, out, batch_size);
      },
      py::arg("model"), py::arg("sentence_file"), py::arg("output_file"), py::arg("batch_size") = 64);
  m.def(
      "read_embeddings",
      [](const std::string& path) {
        auto arr = read_embedding_array(path);
        Matrix mat(arr.n, arr.d);
        mat.data = std::move(arr.rows);
        return to_numpy(std::move(mat));
      },
      py::arg("path"));
  m.def("score_file", &score_file, py::arg("model"), py::arg("pair_file"), py::arg("output_file"));
}
