#include "sernn/cli.hpp"

int main(int argc, char** argv) { return sernn::cli::run(argc, argv); }
