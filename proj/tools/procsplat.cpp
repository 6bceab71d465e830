#include "procsplat/service.hpp"

int main(int argc, char** argv) { return procsplat::run_cli(argc, argv); }
