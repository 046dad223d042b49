#include "gpg/cli.hpp"

int main(int argc, char** argv) { return gpg::cli::run(argc, argv); }
