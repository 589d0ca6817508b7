#include "pglmm/cli.hpp"

int main(int argc, char** argv) { return pglmm::cli_dispatch(argc, argv); }
