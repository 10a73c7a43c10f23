#include "zigan/cli.hpp"

int main(int argc, char** argv) { return zigan::cli_main(argc, argv); }
