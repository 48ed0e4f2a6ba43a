#include "parn/cli.hpp"

int main(int argc, char** argv) { return parn::cli::run(argc, argv); }
