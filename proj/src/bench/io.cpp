#include "cycond/bench/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cycond::bench {

namespace {

void append_double(std::string& line, double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    line.append(buf, ptr);
}

double parse_double(const std::string& tok, int line_no) {
    const char* b = tok.data();
    const char* e = b + tok.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t' || *(e - 1) == '\r')) --e;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || ptr != e)
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": bad number '" + tok + "'");
    return v;
}

std::string act_name(models::Act a) {
    switch (a) {
    case models::Act::Identity: return "identity";
    case models::Act::Tanh: return "tanh";
    case models::Act::Sigmoid: return "sigmoid";
    }
    throw std::runtime_error("unknown activation");
}

models::Act act_parse(const std::string& s) {
    if (s == "identity") return models::Act::Identity;
    if (s == "tanh") return models::Act::Tanh;
    if (s == "sigmoid") return models::Act::Sigmoid;
    throw std::runtime_error("unknown activation name: " + s);
}

json mlp_json(const models::MlpSpec& m) {
    json acts = json::array();
    for (auto a : m.acts) acts.push_back(act_name(a));
    return {{"widths", m.widths}, {"acts", acts}};
}

models::MlpSpec mlp_from_json(const json& j) {
    models::MlpSpec m;
    m.widths = j.at("widths").get<std::vector<int>>();
    for (const auto& a : j.at("acts")) m.acts.push_back(act_parse(a.get<std::string>()));
    if (!m.valid()) throw std::runtime_error("malformed network spec");
    return m;
}

constexpr const char* kCheckpointFormat = "cycond-checkpoint-1";

} // namespace

void write_table(std::ostream& os, int rows, int cols,
                 std::span<const double> v) {
    if (rows < 0 || cols < 1 || v.size() != size_t(rows) * cols)
        throw std::invalid_argument("table shape mismatch");
    os << "# rows=" << rows << " cols=" << cols << '\n';
    std::string line;
    for (int r = 0; r < rows; ++r) {
        line.clear();
        for (int c = 0; c < cols; ++c) {
            if (c) line.push_back(',');
            append_double(line, v[size_t(r) * cols + c]);
        }
        line.push_back('\n');
        os << line;
    }
    if (!os) throw std::runtime_error("table write failed");
}

Table read_table(std::istream& is) {
    std::string line;
    int line_no = 0;
    do {
        if (!std::getline(is, line)) throw std::runtime_error("empty table file");
        line_no++;
    } while (line.find_first_not_of(" \t\r") == std::string::npos);

    Table t;
    if (std::sscanf(line.c_str(), "# rows=%d cols=%d", &t.rows, &t.cols) != 2)
        throw std::runtime_error("missing '# rows=R cols=C' header");
    if (t.rows < 0 || t.cols < 1)
        throw std::runtime_error("bad table dimensions in header");
    t.v.reserve(size_t(t.rows) * t.cols);
    for (int r = 0; r < t.rows; ++r) {
        if (!std::getline(is, line))
            throw std::runtime_error("table truncated at row " + std::to_string(r));
        line_no++;
        std::stringstream ss(line);
        std::string tok;
        int c = 0;
        while (std::getline(ss, tok, ',')) {
            if (c >= t.cols)
                throw std::runtime_error("line " + std::to_string(line_no) +
                                         ": too many columns");
            t.v.push_back(parse_double(tok, line_no));
            c++;
        }
        if (c != t.cols)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(t.cols) +
                                     " columns, got " + std::to_string(c));
    }
    return t;
}

void write_table_file(const std::string& path, int rows, int cols,
                      std::span<const double> v) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_table(os, rows, cols, v);
}

Table read_table_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return read_table(is);
}

void write_dataset(std::ostream& os, const Dataset& d) {
    std::vector<double> v;
    v.reserve(size_t(d.n) * (d.d + 1));
    for (int i = 0; i < d.n; ++i) {
        const auto r = d.row(i);
        v.insert(v.end(), r.begin(), r.end());
        v.push_back(double(d.label[size_t(i)]));
    }
    write_table(os, d.n, d.d + 1, v);
}

Dataset read_dataset(std::istream& is) {
    const Table t = read_table(is);
    if (t.cols < 2) throw std::runtime_error("dataset needs coordinates and a label");
    Dataset d;
    d.n = t.rows;
    d.d = t.cols - 1;
    d.x.reserve(size_t(d.n) * d.d);
    d.label.reserve(size_t(d.n));
    int max_label = -1;
    for (int r = 0; r < t.rows; ++r) {
        for (int c = 0; c + 1 < t.cols; ++c) d.x.push_back(t.at(r, c));
        const double lv = t.at(r, t.cols - 1);
        if (!(lv >= 0) || lv != std::floor(lv) || lv > 1e9)
            throw std::runtime_error("row " + std::to_string(r) +
                                     ": label must be a small non-negative integer");
        const int l = int(lv);
        max_label = std::max(max_label, l);
        d.label.push_back(l);
    }
    d.n_classes = max_label + 1;
    return d;
}

json compat_report_json(const finite::CompatReport& r) {
    json comps = json::array();
    for (size_t i = 0; i < r.complete_supports.size(); ++i) {
        const auto& s = r.complete_supports[i];
        json mask = json::array();
        for (int xi = 0; xi < s.n_x; ++xi) {
            std::string row(size_t(s.n_z), '0');
            for (int zj = 0; zj < s.n_z; ++zj)
                if (s.cell(xi, zj)) row[size_t(zj)] = '1';
            mask.push_back(row);
        }
        json joint = json::array();
        const auto& jm = r.joints[i];
        for (int xi = 0; xi < jm.n_x; ++xi) {
            json row = json::array();
            for (int zj = 0; zj < jm.n_z; ++zj) row.push_back(jm.at(xi, zj));
            joint.push_back(row);
        }
        comps.push_back({{"support", mask},
                         {"witness", {{"a", r.witnesses[i].a}, {"b", r.witnesses[i].b}}},
                         {"joint", joint},
                         {"determinate", bool(r.determinate[i])}});
    }
    return {{"n_x", r.n_x},
            {"n_z", r.n_z},
            {"compatible", r.compatible},
            {"globally_determinate", r.globally_determinate},
            {"components", comps}};
}

json checkpoint_json(const Checkpoint& c) {
    return {{"format", kCheckpointFormat},
            {"dataset", c.dataset},
            {"method", c.method},
            {"seed", c.seed},
            {"n_train", c.n_train},
            {"step", c.step},
            {"diverged", c.diverged},
            {"decoder",
             {{"mean_net", mlp_json(c.dec.mean_net)},
              {"sigma2", c.dec.sigma2},
              {"params", c.dec_params}}},
            {"encoder",
             {{"cond_net", mlp_json(c.enc.cond_net)},
              {"d_z", c.enc.d_z},
              {"n_layers", c.enc.n_layers},
              {"n_reflections", c.enc.n_reflections},
              {"params", c.enc_params}}}};
}

Checkpoint checkpoint_from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat)
            throw std::runtime_error("unrecognized checkpoint format tag");
        Checkpoint c;
        c.dataset = j.at("dataset").get<std::string>();
        c.method = j.at("method").get<std::string>();
        c.seed = j.at("seed").get<uint64_t>();
        c.n_train = j.at("n_train").get<int>();
        if (c.n_train < 1) throw std::runtime_error("n_train must be positive");
        c.step = j.at("step").get<long>();
        c.diverged = j.at("diverged").get<bool>();
        const json& dj = j.at("decoder");
        c.dec.mean_net = mlp_from_json(dj.at("mean_net"));
        c.dec.sigma2 = dj.at("sigma2").get<double>();
        if (!(c.dec.sigma2 > 0)) throw std::runtime_error("sigma2 must be positive");
        c.dec_params = dj.at("params").get<std::vector<double>>();
        if (c.dec_params.size() != size_t(c.dec.mean_net.param_count()))
            throw std::runtime_error("decoder parameter count mismatch");
        const json& ej = j.at("encoder");
        c.enc.cond_net = mlp_from_json(ej.at("cond_net"));
        c.enc.d_z = ej.at("d_z").get<int>();
        c.enc.n_layers = ej.at("n_layers").get<int>();
        c.enc.n_reflections = ej.at("n_reflections").get<int>();
        if (!c.enc.valid()) throw std::runtime_error("malformed encoder spec");
        c.enc_params = ej.at("params").get<std::vector<double>>();
        if (c.enc_params.size() != size_t(c.enc.param_count()))
            throw std::runtime_error("encoder parameter count mismatch");
        return c;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: ") + e.what());
    }
}

void save_json(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("write failed: " + path);
}

json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

namespace {

void check_node(const json& d, const json& s, const std::string& path,
                std::vector<std::string>& out) {
    if (s.contains("type")) {
        const std::string t = s["type"].get<std::string>();
        const bool ok = (t == "object" && d.is_object()) ||
                        (t == "array" && d.is_array()) ||
                        (t == "string" && d.is_string()) ||
                        (t == "number" && d.is_number()) ||
                        (t == "integer" && d.is_number_integer()) ||
                        (t == "boolean" && d.is_boolean());
        if (!ok) {
            out.push_back(path + ": expected " + t);
            return;
        }
    }
    if (s.contains("enum")) {
        bool hit = false;
        for (const auto& v : s["enum"])
            if (d == v) { hit = true; break; }
        if (!hit) out.push_back(path + ": value not in enum");
    }
    if (d.is_number()) {
        const double v = d.get<double>();
        if (s.contains("minimum") && v < s["minimum"].get<double>())
            out.push_back(path + ": below minimum");
        if (s.contains("maximum") && v > s["maximum"].get<double>())
            out.push_back(path + ": above maximum");
    }
    if (d.is_object()) {
        if (s.contains("required"))
            for (const auto& r : s["required"]) {
                const std::string key = r.get<std::string>();
                if (!d.contains(key)) out.push_back(path + ": missing " + key);
            }
        if (s.contains("properties"))
            for (const auto& [key, sub] : s["properties"].items())
                if (d.contains(key)) check_node(d[key], sub, path + "." + key, out);
    }
    if (d.is_array() && s.contains("items")) {
        int i = 0;
        for (const auto& el : d) {
            check_node(el, s["items"], path + "[" + std::to_string(i) + "]", out);
            i++;
        }
    }
}

} // namespace

std::vector<std::string> schema_violations(const json& doc,
                                           const json& schema) {
    std::vector<std::string> out;
    check_node(doc, schema, "$", out);
    return out;
}

} // namespace cycond::bench
