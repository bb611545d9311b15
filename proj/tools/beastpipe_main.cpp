#include "beastpipe/cli.hpp"

int main(int argc, char** argv) { return beastpipe::cli::run(argc, argv); }
