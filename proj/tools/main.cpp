#include "cli.hpp"

int main(int argc, char** argv) { return deshadow::cli::dispatch(argc, argv); }
