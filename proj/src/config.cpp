#include "sac/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace sac {

EdgeSource edge_source_from_string(const std::string& s) {
    if (s == "predictor") return EdgeSource::predictor;
    if (s == "dense") return EdgeSource::dense;
    if (s == "full") return EdgeSource::full;
    if (s == "random") return EdgeSource::random;
    if (s == "segment") return EdgeSource::segment;
    if (s == "span") return EdgeSource::span;
    if (s == "bpt") return EdgeSource::bpt;
    throw ConfigError("unknown edge source: " + s);
}

std::string to_string(EdgeSource s) {
    switch (s) {
        case EdgeSource::predictor: return "predictor";
        case EdgeSource::dense: return "dense";
        case EdgeSource::full: return "full";
        case EdgeSource::random: return "random";
        case EdgeSource::segment: return "segment";
        case EdgeSource::span: return "span";
        case EdgeSource::bpt: return "bpt";
    }
    return "?";
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("bad boolean for " + key + ": " + v);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": " + v);
    }
}

std::vector<std::int64_t> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<std::int64_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_int(key, item));
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (key == "task.name") task = v;
    else if (key == "task.n") n = parse_int(key, v);
    else if (key == "task.vocab") vocab = parse_int(key, v);
    else if (key == "task.corpus") corpus = v;
    else if (key == "task.synth_corpus_bytes") synth_corpus_bytes = parse_int(key, v);
    else if (key == "task.graph_file") graph_file = v;
    else if (key == "task.eval_examples") eval_examples = parse_int(key, v);
    else if (key == "model.d") d = parse_int(key, v);
    else if (key == "model.d_ff") d_ff = parse_int(key, v);
    else if (key == "model.heads") heads = parse_int(key, v);
    else if (key == "model.layers") layers = parse_int(key, v);
    else if (key == "model.d_lstm") d_lstm = parse_int(key, v);
    else if (key == "model.dist_max") dist_max = parse_int(key, v);
    else if (key == "edges.alpha") alpha = parse_double(key, v);
    else if (key == "edges.source") edge_source = edge_source_from_string(v);
    else if (key == "edges.shared") shared_structure = parse_bool(key, v);
    else if (key == "edges.all_nodes_connected") all_nodes_connected = parse_bool(key, v);
    else if (key == "edges.head_adaptive") head_adaptive = parse_bool(key, v);
    else if (key == "edges.causal") causal = parse_bool(key, v);
    else if (key == "edges.dummy_node") dummy_node = parse_bool(key, v);
    else if (key == "edges.undirected") undirected = parse_bool(key, v);
    else if (key == "edges.seg_len") seg_len = parse_int(key, v);
    else if (key == "edges.spans") spans = parse_int_list(key, v);
    else if (key == "train.steps") steps = parse_int(key, v);
    else if (key == "train.epochs") epochs = parse_int(key, v);
    else if (key == "train.batch") batch = parse_int(key, v);
    else if (key == "train.lr_phi") lr_phi = parse_double(key, v);
    else if (key == "train.lr_theta") lr_theta = parse_double(key, v);
    else if (key == "train.beta1") beta1 = parse_double(key, v);
    else if (key == "train.beta2") beta2 = parse_double(key, v);
    else if (key == "train.adam_eps") adam_eps = parse_double(key, v);
    else if (key == "train.label_smoothing") label_smoothing = parse_double(key, v);
    else if (key == "train.clip_theta") clip_theta = parse_double(key, v);
    else if (key == "train.entropy_reg") entropy_reg = parse_double(key, v);
    else if (key == "train.reward_norm") reward_norm = parse_bool(key, v);
    else if (key == "train.seed") seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "train.eval_every") eval_every = parse_int(key, v);
    else if (key == "train.target_metric") target_metric = parse_double(key, v);
    else if (key == "eval.beam") beam = parse_int(key, v);
    else throw ConfigError("unknown config key: " + key);
}

void RunConfig::validate() const {
    if (task != "pointer" && task != "char_lm" && task != "graph") throw ConfigError("unknown task: " + task);
    if (n < 1) throw ConfigError("task.n must be positive");
    if (d < 1 || d_ff < 1 || layers < 1 || heads < 1) throw ConfigError("model dimensions must be positive");
    if (d % heads != 0) throw ConfigError("model.d must be divisible by model.heads");
    if (alpha * static_cast<double>(n) < 1.0) throw ConfigError("edges.alpha * n must be at least 1");
    if (beam < 1) throw ConfigError("eval.beam must be >= 1");
    if (batch < 1) throw ConfigError("train.batch must be >= 1");
    if (edge_source == EdgeSource::segment && (seg_len < 1 || seg_len > n))
        throw ConfigError("edges.seg_len must be in [1, n] for the segment source");
    if (edge_source == EdgeSource::span && spans.empty())
        throw ConfigError("edges.spans required for the span source");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("train.label_smoothing must be in [0,1)");
}

std::string RunConfig::canonical() const {
    std::ostringstream os;
    os << "[task]\n";
    os << "name = " << task << "\n";
    os << "n = " << n << "\n";
    os << "vocab = " << vocab << "\n";
    os << "corpus = " << corpus << "\n";
    os << "synth_corpus_bytes = " << synth_corpus_bytes << "\n";
    os << "graph_file = " << graph_file << "\n";
    os << "eval_examples = " << eval_examples << "\n";
    os << "[model]\n";
    os << "d = " << d << "\n";
    os << "d_ff = " << d_ff << "\n";
    os << "heads = " << heads << "\n";
    os << "layers = " << layers << "\n";
    os << "d_lstm = " << d_lstm << "\n";
    os << "dist_max = " << dist_max << "\n";
    os << "[edges]\n";
    os << "alpha = " << fmt_double(alpha) << "\n";
    os << "source = " << to_string(edge_source) << "\n";
    os << "shared = " << shared_structure << "\n";
    os << "all_nodes_connected = " << all_nodes_connected << "\n";
    os << "head_adaptive = " << head_adaptive << "\n";
    os << "causal = " << causal << "\n";
    os << "dummy_node = " << dummy_node << "\n";
    os << "undirected = " << undirected << "\n";
    os << "seg_len = " << seg_len << "\n";
    os << "spans = ";
    for (std::size_t i = 0; i < spans.size(); ++i) os << (i ? "," : "") << spans[i];
    os << "\n";
    os << "[train]\n";
    os << "steps = " << steps << "\n";
    os << "epochs = " << epochs << "\n";
    os << "batch = " << batch << "\n";
    os << "lr_phi = " << fmt_double(lr_phi) << "\n";
    os << "lr_theta = " << fmt_double(lr_theta) << "\n";
    os << "beta1 = " << fmt_double(beta1) << "\n";
    os << "beta2 = " << fmt_double(beta2) << "\n";
    os << "adam_eps = " << fmt_double(adam_eps) << "\n";
    os << "label_smoothing = " << fmt_double(label_smoothing) << "\n";
    os << "clip_theta = " << fmt_double(clip_theta) << "\n";
    os << "entropy_reg = " << fmt_double(entropy_reg) << "\n";
    os << "reward_norm = " << reward_norm << "\n";
    os << "seed = " << seed << "\n";
    os << "eval_every = " << eval_every << "\n";
    os << "target_metric = " << fmt_double(target_metric) << "\n";
    os << "[eval]\n";
    os << "beam = " << beam << "\n";
    return os.str();
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    std::int64_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("bad section header at line " + std::to_string(lineno));
            section = t.substr(1, t.size() - 2);
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value at line " + std::to_string(lineno));
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (section.empty()) throw ConfigError("key outside any [section] at line " + std::to_string(lineno));
        cfg.set(section + "." + key, value);
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
    for (const std::string& ov : overrides) {
        const std::size_t eq = ov.find('=');
        if (eq == std::string::npos) throw ConfigError("override must look like section.key=value: " + ov);
        cfg.set(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
    }
}

}  // namespace sac
