#include "paraembed/tools.hpp"

int main(int argc, char** argv) { return paraembed::cli_dispatch(argc, argv); }
