#include "cycond/bench/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>

namespace cycond::bench {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// comment starts at the first # outside a quoted string
std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        else if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

long long parse_int_tok(const std::string& tok, int line) {
    long long v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
        fail(line, "bad integer '" + tok + "'");
    return v;
}

TomlValue parse_value(const std::string& raw, int line) {
    const std::string v = trim(raw);
    if (v.empty()) fail(line, "missing value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            fail(line, "unterminated string");
        return v.substr(1, v.size() - 2);
    }
    if (v == "true") return true;
    if (v == "false") return false;
    if (v.front() == '[') {
        if (v.back() != ']') fail(line, "unterminated array");
        std::vector<long long> items;
        std::string body = v.substr(1, v.size() - 2);
        size_t pos = 0;
        while (pos <= body.size()) {
            const size_t comma = body.find(',', pos);
            const std::string tok =
                trim(body.substr(pos, comma == std::string::npos
                                          ? std::string::npos
                                          : comma - pos));
            if (tok.empty()) {
                if (comma == std::string::npos && items.empty()) break; // []
                fail(line, "empty array element");
            }
            items.push_back(parse_int_tok(tok, line));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return items;
    }
    // integer if it consumes fully as one, else float
    {
        long long iv = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), iv);
        if (ec == std::errc{} && p == v.data() + v.size()) return iv;
    }
    {
        double fv = 0.0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), fv);
        if (ec == std::errc{} && p == v.data() + v.size()) return fv;
    }
    fail(line, "unrecognized value '" + v + "'");
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

} // namespace

std::map<std::string, TomlValue> parse_toml(std::istream& is) {
    std::map<std::string, TomlValue> out;
    std::string line, section;
    int line_no = 0;
    while (std::getline(is, line)) {
        line_no++;
        const std::string s = trim(strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(line_no, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (!valid_key(section)) fail(line_no, "bad section name");
            continue;
        }
        const size_t eq = s.find('=');
        if (eq == std::string::npos) fail(line_no, "expected key = value");
        const std::string key = trim(s.substr(0, eq));
        if (!valid_key(key)) fail(line_no, "bad key '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        out[full] = parse_value(s.substr(eq + 1), line_no);
    }
    return out;
}

namespace {

[[noreturn]] void key_fail(const std::string& key, const std::string& what) {
    throw ConfigError("config key '" + key + "': " + what);
}

long long as_int(const std::string& key, const TomlValue& v) {
    if (const auto* i = std::get_if<long long>(&v)) return *i;
    key_fail(key, "expected an integer");
}

double as_float(const std::string& key, const TomlValue& v) {
    if (const auto* f = std::get_if<double>(&v)) return *f;
    if (const auto* i = std::get_if<long long>(&v)) return double(*i);
    key_fail(key, "expected a number");
}

bool as_bool(const std::string& key, const TomlValue& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b;
    key_fail(key, "expected true or false");
}

std::string as_str(const std::string& key, const TomlValue& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    key_fail(key, "expected a string");
}

std::vector<int> as_int_list(const std::string& key, const TomlValue& v) {
    if (const auto* l = std::get_if<std::vector<long long>>(&v)) {
        std::vector<int> out;
        for (long long x : *l) out.push_back(int(x));
        return out;
    }
    key_fail(key, "expected an integer array");
}

void apply_key(RunConfig& c, const std::string& k, const TomlValue& v) {
    if (k == "dataset") c.dataset = as_str(k, v);
    else if (k == "method") c.method = as_str(k, v);
    else if (k == "out_dir") c.out_dir = as_str(k, v);
    else if (k == "seed") {
        const long long s = as_int(k, v);
        if (s < 0) key_fail(k, "seed must be non-negative");
        c.seed = uint64_t(s);
        c.has_seed = true;
    } else if (k == "n_train") c.n_train = int(as_int(k, v));
    else if (k == "model.d_z") c.d_z = int(as_int(k, v));
    else if (k == "model.flow_layers") c.flow_layers = int(as_int(k, v));
    else if (k == "model.n_reflections") c.n_reflections = int(as_int(k, v));
    else if (k == "model.cond_widths") c.cond_widths = as_int_list(k, v);
    else if (k == "model.dec_widths") c.dec_widths = as_int_list(k, v);
    else if (k == "model.sigma2") c.sigma2 = as_float(k, v);
    else if (k == "loss.w_compat") c.w_compat = as_float(k, v);
    else if (k == "loss.w_nll") c.w_nll = as_float(k, v);
    else if (k == "loss.beta") c.beta = as_float(k, v);
    else if (k == "loss.k_nll") c.k_nll = int(as_int(k, v));
    else if (k == "loss.k_dae") c.k_dae = int(as_int(k, v));
    else if (k == "loss.n_probes") c.n_probes = int(as_int(k, v));
    else if (k == "optim.lr") c.lr = as_float(k, v);
    else if (k == "optim.weight_decay") c.weight_decay = as_float(k, v);
    else if (k == "optim.dec_lr_drop") c.dec_lr_drop = as_float(k, v);
    else if (k == "optim.batch") c.batch = int(as_int(k, v));
    else if (k == "optim.n_steps") c.n_steps = long(as_int(k, v));
    else if (k == "optim.pretrain_epochs") c.pretrain_epochs = int(as_int(k, v));
    else if (k == "optim.log_every") c.log_every = int(as_int(k, v));
    else if (k == "sampler.eps") c.sgld_eps = as_float(k, v);
    else if (k == "sampler.n_steps") c.sgld_steps = int(as_int(k, v));
    else if (k == "sampler.init_std") c.init_std = as_float(k, v);
    else if (k == "sampler.clamp_seeds") c.clamp_seeds = as_bool(k, v);
    else if (k == "sampler.clamp_limit") c.clamp_limit = as_float(k, v);
    else if (k == "eval.n_samples") c.n_eval_samples = int(as_int(k, v));
    else if (k == "eval.n_nll_points") c.n_nll_points = int(as_int(k, v));
    else if (k == "eval.k_nll") c.k_nll_eval = int(as_int(k, v));
    else key_fail(k, "unknown key");
}

} // namespace

bool RunConfig::valid(std::string* why) const {
    auto bad = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (dataset != "pinwheel" && dataset != "8gaussians")
        return bad("unknown dataset '" + dataset + "'");
    if (method != "cygen" && method != "cygen_pt" && method != "dae" &&
        method != "vae")
        return bad("unknown method '" + method + "'");
    if (n_train < 1) return bad("n_train must be >= 1");
    if (d_z < 1) return bad("model.d_z must be >= 1");
    if (flow_layers < 0) return bad("model.flow_layers must be >= 0");
    if (n_reflections < 1 || n_reflections > d_z)
        return bad("model.n_reflections must lie in [1, d_z]");
    if (cond_widths.size() < 2 || dec_widths.size() < 2)
        return bad("network widths need input and output sizes");
    for (int w : cond_widths)
        if (w < 1) return bad("model.cond_widths entries must be positive");
    for (int w : dec_widths)
        if (w < 1) return bad("model.dec_widths entries must be positive");
    if (cond_widths.front() != 2)
        return bad("model.cond_widths must start at the data dimension 2");
    if (dec_widths.front() != d_z)
        return bad("model.dec_widths must start at model.d_z");
    if (dec_widths.back() != 2)
        return bad("model.dec_widths must end at the data dimension 2");
    if (!(sigma2 > 0)) return bad("model.sigma2 must be positive");
    if (w_compat < 0 || w_nll < 0 || beta < 0)
        return bad("loss weights must be non-negative");
    if (k_nll < 1 || k_dae < 1 || n_probes < 1)
        return bad("draw counts must be >= 1");
    if (!(lr > 0)) return bad("optim.lr must be positive");
    if (weight_decay < 0) return bad("optim.weight_decay must be non-negative");
    if (!(dec_lr_drop > 0)) return bad("optim.dec_lr_drop must be positive");
    if (batch < 1) return bad("optim.batch must be >= 1");
    if (n_steps < 1) return bad("optim.n_steps must be >= 1");
    if (pretrain_epochs < 0) return bad("optim.pretrain_epochs must be >= 0");
    if (log_every < 1) return bad("optim.log_every must be >= 1");
    if (!(sgld_eps > 0)) return bad("sampler.eps must be positive");
    if (sgld_steps < 1) return bad("sampler.n_steps must be >= 1");
    if (!(init_std > 0)) return bad("sampler.init_std must be positive");
    if (!(clamp_limit > 0)) return bad("sampler.clamp_limit must be positive");
    if (n_eval_samples < 1) return bad("eval.n_samples must be >= 1");
    if (n_nll_points < 1) return bad("eval.n_nll_points must be >= 1");
    if (k_nll_eval < 1) return bad("eval.k_nll must be >= 1");
    return true;
}

RunConfig config_from_toml(std::istream& is) {
    RunConfig c;
    for (const auto& [k, v] : parse_toml(is)) apply_key(c, k, v);
    return c;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read config " + path);
    return config_from_toml(is);
}

} // namespace cycond::bench
