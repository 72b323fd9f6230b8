#include "cornering/cli/commands.hpp"

int main(int argc, char** argv) { return cornering::cli::run(argc, argv); }
