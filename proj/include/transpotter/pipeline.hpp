#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "transpotter/runconfig.hpp"

namespace transpotter {

// In-process command implementations behind the CLI; tests drive these
// directly. Each returns the directory it wrote to and throws on failure.

std::string run_synth(RunConfig rc, const std::string& out_override, bool force,
                      std::ostream& out);

std::string run_train(RunConfig rc, const std::string& out_override, bool resume,
                      std::ostream& out);

std::string run_eval(RunConfig rc, const std::string& out_override, std::ostream& out);

// Prints the presence probability and binarized spans for one keyword/phrase;
// optionally writes the frame curve as CSV.
void run_spot(const RunConfig& rc, const std::string& keyword_or_phrase,
              const std::string& curve_csv, std::ostream& out);

std::string run_probe(RunConfig rc, const std::vector<std::string>& words,
                      const std::string& out_override, std::ostream& out);

}  // namespace transpotter
