#include "cli.hpp"

int main(int argc, char** argv) { return iterlearn::cli::run_main(argc, argv); }
