#include "twolayer/harness.hpp"

int main(int argc, char** argv) { return twolayer::cli_main(argc, argv); }
