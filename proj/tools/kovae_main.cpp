#include "kovae/cli.hpp"

int main(int argc, char** argv) { return kovae::cli::dispatch(argc, argv); }
