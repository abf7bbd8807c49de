#include "cli.hpp"

int main(int argc, char** argv) { return causalma::cli::run(argc, argv); }
