#include "riskcal_cli.hpp"

int main(int argc, char** argv) { return riskcal::cli::run(argc, argv); }
