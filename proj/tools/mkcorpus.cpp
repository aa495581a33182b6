#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "neutart/corpus.hpp"
#include "neutart/errors.hpp"

// Emits the bundled procedural demo corpus so the prepare/train/synth/eval
// pipeline can be exercised without any external recordings.
int main(int argc, char** argv) {
  CLI::App app{"Generate a self-contained demo corpus"};
  std::string out;
  std::uint64_t seed = 1234;
  long count = 10;
  app.add_option("--out", out, "directory to create the corpus in")->required();
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--count", count, "number of utterances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    std::string config = neutart::corpus::generate_synthetic_corpus(out, seed, count);
    std::cout << config << "\n";
  } catch (const neutart::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const neutart::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
