#include "cli.hpp"

int main(int argc, char** argv) {
  return sprout::cli::main(argc, argv);
}
