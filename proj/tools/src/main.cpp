#include "msw/cli.hpp"

int main(int argc, char** argv) { return msw::cli::main(argc, argv); }
