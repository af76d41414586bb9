#include "ebmvae/cli.hpp"

int main(int argc, char** argv) { return ebmvae::cli_main(argc, argv); }
