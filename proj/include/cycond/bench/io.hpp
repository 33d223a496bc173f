#pragma once
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cycond/bench/datasets.hpp"
#include "cycond/finite.hpp"
#include "cycond/models.hpp"

// File formats for the experiment harness: numeric tables and datasets as
// CSV with a "# rows=R cols=C" header line, checkpoints and discrete
// analysis reports as JSON, and a small JSON-schema checker used to
// validate emitted metrics documents.

namespace cycond::bench {

using nlohmann::json;

struct Table {
    int rows = 0, cols = 0;
    std::vector<double> v; // row-major

    double at(int r, int c) const { return v[size_t(r) * cols + c]; }
};

// values are printed with std::to_chars, so a write/read trip is exact
void write_table(std::ostream& os, int rows, int cols,
                 std::span<const double> v);
Table read_table(std::istream& is); // throws std::runtime_error on bad input
void write_table_file(const std::string& path, int rows, int cols,
                      std::span<const double> v);
Table read_table_file(const std::string& path);

// dataset rows are the point coordinates followed by the class label
void write_dataset(std::ostream& os, const Dataset& d);
Dataset read_dataset(std::istream& is);

// support masks as one 0/1 string per x-row
json compat_report_json(const finite::CompatReport& r);

struct Checkpoint {
    std::string dataset, method;
    uint64_t seed = 0;
    int n_train = 0; // size of the training draw, needed to re-embed it
    long step = 0;
    bool diverged = false;
    models::GaussianConditional dec;
    std::vector<double> dec_params;
    models::FlowSpec enc;
    std::vector<double> enc_params;
};

json checkpoint_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const json& j); // throws std::runtime_error

void save_json(const std::string& path, const json& j);
json load_json(const std::string& path); // throws std::runtime_error

// Checks a document against a JSON-schema subset: type, required,
// properties, items, enum, minimum, maximum.  Returns human-readable
// violations; empty means the document conforms.
std::vector<std::string> schema_violations(const json& doc,
                                           const json& schema);

} // namespace cycond::bench
