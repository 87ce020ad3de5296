#include <batchlens/experiments.hpp>

#include <iostream>

int main(int argc, char** argv) { return batchlens::run_cli(argc, argv, std::cout, std::cerr); }
