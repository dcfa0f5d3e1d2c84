#include "massnet/cli.hpp"

int main(int argc, char** argv) { return massnet::cli::dispatch(argc, argv); }
