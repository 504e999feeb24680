#include "s2am/cli.hpp"

int main(int argc, char** argv) { return s2am::cli::run(argc, argv); }
