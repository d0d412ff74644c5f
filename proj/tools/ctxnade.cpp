#include "ctxnade/cli.hpp"

int main(int argc, char** argv) { return ctxnade::cli::run(argc, argv); }
