#include "mlta/cli.hpp"

int main(int argc, char** argv) { return mlta::run(argc, argv); }
