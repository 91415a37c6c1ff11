#include "synckernel/cli.hpp"

int main(int argc, char** argv) { return synckernel::cli::run_pipeline(argc, argv); }
