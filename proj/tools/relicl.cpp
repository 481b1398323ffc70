#include "relicl/cli/cli.hpp"

int main(int argc, char** argv) { return relicl::cli::run(argc, argv); }
