#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crosslag::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,         // bad flags, invalid configs or specs, out-of-range selections
    kIncompatible = 3,  // data or checkpoint does not fit the requested model/run
};

// Runs one command line (args[0] is the program name). Everything the tool
// prints goes to `out` / `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Prediction CSV as written by `predict`: one row per week offset.
struct PredictionTable {
    std::string label;  // e.g. "Truth 30"
    std::vector<int> week_offset;
    std::vector<double> history, truth, prediction;  // NaN where a series has no value
};
PredictionTable parse_prediction_csv(std::istream& in);

}  // namespace crosslag::cli
