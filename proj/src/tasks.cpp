#include "sac/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace sac {

std::string example_to_line(const Example& ex) {
    std::ostringstream os;
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) os << (i ? " " : "") << ex.tokens[i];
    os << " | ";
    for (std::size_t i = 0; i < ex.targets.size(); ++i) os << (i ? " " : "") << ex.targets[i];
    return os.str();
}

Example example_from_line(const std::string& line) {
    const std::size_t bar = line.find('|');
    if (bar == std::string::npos) throw DataError("example line missing '|' separator");
    Example ex;
    {
        std::istringstream is(line.substr(0, bar));
        std::int64_t v;
        while (is >> v) ex.tokens.push_back(v);
    }
    {
        std::istringstream is(line.substr(bar + 1));
        std::int64_t v;
        while (is >> v) ex.targets.push_back(v);
    }
    if (ex.tokens.empty() || ex.targets.empty()) throw DataError("example line incomplete: " + line);
    return ex;
}

PointerTask::PointerTask(std::int64_t n, std::int64_t vocab, std::uint64_t seed) : n_(n), vocab_(vocab), seed_(seed) {
    if (n < 4) throw ConfigError("pointer task needs n >= 4");
    if (vocab < 2) throw ConfigError("pointer task needs vocab >= 2");
    if ((n - 2) > vocab * vocab) throw ConfigError("pointer task: index range exceeds two digits");
}

Example PointerTask::make(std::int64_t id) const {
    Rng rng(seed_, static_cast<std::uint64_t>(id));
    Example ex;
    ex.tokens.resize(static_cast<std::size_t>(n_));
    for (std::int64_t i = 0; i < n_ - 2; ++i) ex.tokens[i] = rng.uniform_int(vocab_);
    const std::int64_t p = rng.uniform_int(n_ - 2);
    ex.tokens[n_ - 2] = p / vocab_;
    ex.tokens[n_ - 1] = p % vocab_;
    ex.targets = {ex.tokens[p]};
    return ex;
}

std::vector<Example> PointerTask::train_batch(std::int64_t step, std::int64_t batch_size) const {
    std::vector<Example> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (std::int64_t i = 0; i < batch_size; ++i) out.push_back(make(step * batch_size + i));
    return out;
}

std::vector<Example> PointerTask::eval_set(std::int64_t count) const {
    std::vector<Example> out;
    out.reserve(static_cast<std::size_t>(count));
    // fixed stream far away from any training id
    for (std::int64_t i = 0; i < count; ++i) out.push_back(make((std::int64_t{1} << 40) + i));
    return out;
}

CharLmTask::CharLmTask(std::vector<std::uint8_t> corpus, std::int64_t n) : corpus_(std::move(corpus)), n_(n) {
    if (n_ < 2) throw ConfigError("char lm needs context >= 2");
    if (static_cast<std::int64_t>(corpus_.size()) < 20 * n_)
        throw DataError("char lm corpus too small: " + std::to_string(corpus_.size()) + " bytes");
    train_end_ = static_cast<std::int64_t>(corpus_.size()) * 95 / 100;
}

CharLmTask CharLmTask::load(const std::string& path, std::int64_t n) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open corpus: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.empty()) throw DataError("empty corpus: " + path);
    return CharLmTask(std::move(bytes), n);
}

Example CharLmTask::train_window(Rng& rng) const {
    const std::int64_t start = rng.uniform_int(train_end_ - n_ - 1);
    Example ex;
    ex.tokens.resize(static_cast<std::size_t>(n_));
    ex.targets.resize(static_cast<std::size_t>(n_));
    for (std::int64_t i = 0; i < n_; ++i) {
        ex.tokens[i] = corpus_[start + i];
        ex.targets[i] = corpus_[start + i + 1];
    }
    return ex;
}

std::vector<Example> CharLmTask::train_batch(std::int64_t step, std::uint64_t seed, std::int64_t batch_size) const {
    std::vector<Example> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (std::int64_t i = 0; i < batch_size; ++i) {
        Rng rng(seed, static_cast<std::uint64_t>(step * batch_size + i) ^ 0xC0FFEEULL);
        out.push_back(train_window(rng));
    }
    return out;
}

std::vector<Example> CharLmTask::eval_windows(std::int64_t max_windows) const {
    std::vector<Example> out;
    for (std::int64_t start = train_end_;
         start + n_ + 1 <= static_cast<std::int64_t>(corpus_.size()) &&
         static_cast<std::int64_t>(out.size()) < max_windows;
         start += n_) {
        Example ex;
        ex.tokens.resize(static_cast<std::size_t>(n_));
        ex.targets.resize(static_cast<std::size_t>(n_));
        for (std::int64_t i = 0; i < n_; ++i) {
            ex.tokens[i] = corpus_[start + i];
            ex.targets[i] = corpus_[start + i + 1];
        }
        out.push_back(std::move(ex));
    }
    if (out.empty()) throw DataError("corpus too small for any evaluation window");
    return out;
}

namespace {

const char* kLexicon[] = {
    "the",    "of",     "and",     "to",      "in",      "a",       "is",     "that",   "for",    "it",
    "as",     "was",    "with",    "be",      "by",      "on",      "not",    "he",     "this",   "are",
    "or",     "his",    "from",    "at",      "which",   "but",     "have",   "an",     "had",    "they",
    "you",    "were",   "their",   "one",     "all",     "we",      "can",    "her",    "has",    "there",
    "been",   "if",     "more",    "when",    "will",    "would",   "who",    "so",     "no",     "she",
    "other",  "its",    "may",     "these",   "what",    "them",    "than",   "some",   "him",    "time",
    "into",   "only",   "could",   "new",     "two",     "our",     "work",   "first",  "water",  "after",
    "where",  "system", "because", "through", "between", "people",  "state",  "found",  "under",  "small",
    "large",  "early",  "light",   "order",   "point",   "number",  "course", "public", "matter", "general",
    "change", "model",  "theory",  "value",   "result",  "measure", "signal", "vector", "search", "sample",
};
constexpr std::size_t kLexiconSize = sizeof(kLexicon) / sizeof(kLexicon[0]);

}  // namespace

std::vector<std::uint8_t> synthetic_corpus(std::int64_t bytes, std::uint64_t seed) {
    Rng rng(seed);
    std::string text;
    text.reserve(static_cast<std::size_t>(bytes) + 64);
    bool sentence_start = true;
    std::int64_t words_in_sentence = 0;
    while (static_cast<std::int64_t>(text.size()) < bytes) {
        // Zipf-ish draw: prefer early lexicon entries.
        const double u = rng.uniform();
        const auto idx = static_cast<std::size_t>(u * u * static_cast<double>(kLexiconSize));
        std::string word = kLexicon[std::min(idx, kLexiconSize - 1)];
        if (sentence_start) {
            word[0] = static_cast<char>(word[0] - 'a' + 'A');
            sentence_start = false;
        }
        text += word;
        ++words_in_sentence;
        if (words_in_sentence >= 6 && rng.uniform() < 0.18) {
            text += rng.uniform() < 0.8 ? ". " : ", ";
            if (text[text.size() - 2] == '.') {
                sentence_start = true;
                words_in_sentence = 0;
            }
        } else {
            text += ' ';
        }
    }
    text.resize(static_cast<std::size_t>(bytes));
    return {text.begin(), text.end()};
}

void write_synthetic_corpus(const std::string& path, std::int64_t bytes, std::uint64_t seed) {
    auto data = synthetic_corpus(bytes, seed);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write corpus: " + path);
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void GraphTask::validate() const {
    if (n < 1) throw DataError("graph: no nodes");
    if (static_cast<std::int64_t>(features.size()) != n * feat_dim) throw DataError("graph: feature size mismatch");
    if (static_cast<std::int64_t>(labels.size()) != n) throw DataError("graph: label count mismatch");
    for (auto l : labels) {
        if (l < 0 || l >= classes) throw DataError("graph: label out of range");
    }
    for (auto [u, v] : base.edges) {
        if (u < 0 || v < 0 || u >= n || v >= n) throw DataError("graph: edge index out of range");
    }
    for (const auto* mask : {&train_mask, &valid_mask, &test_mask}) {
        for (auto i : *mask) {
            if (i < 0 || i >= n) throw DataError("graph: mask index out of range");
        }
    }
}

GraphTask load_graph_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open graph file: " + path);
    GraphTask g;
    if (!(f >> g.n >> g.feat_dim >> g.classes)) throw DataError("graph: bad header (want: N F C)");
    g.features.resize(static_cast<std::size_t>(g.n * g.feat_dim));
    for (auto& x : g.features) {
        if (!(f >> x)) throw DataError("graph: truncated feature block");
    }
    g.labels.resize(static_cast<std::size_t>(g.n));
    for (auto& l : g.labels) {
        if (!(f >> l)) throw DataError("graph: truncated label block");
    }
    std::string tag;
    std::int64_t e = 0;
    if (!(f >> tag >> e) || tag != "edges") throw DataError("graph: expected 'edges E'");
    g.base.n = g.n;
    for (std::int64_t i = 0; i < e; ++i) {
        std::int32_t u, v;
        if (!(f >> u >> v)) throw DataError("graph: truncated edge list");
        g.base.edges.push_back({u, v});
    }
    auto read_mask = [&](const char* name, std::vector<std::int64_t>& mask) {
        std::string t;
        if (!(f >> t) || t != std::string(name) + ":") throw DataError(std::string("graph: expected '") + name + ":'");
        std::string rest;
        std::getline(f, rest);
        std::istringstream is(rest);
        std::int64_t idx;
        while (is >> idx) mask.push_back(idx);
    };
    read_mask("train", g.train_mask);
    read_mask("valid", g.valid_mask);
    read_mask("test", g.test_mask);
    g.validate();
    return g;
}

void save_graph_file(const GraphTask& g, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write graph file: " + path);
    f.precision(17);
    f << g.n << " " << g.feat_dim << " " << g.classes << "\n";
    for (std::int64_t i = 0; i < g.n; ++i) {
        for (std::int64_t j = 0; j < g.feat_dim; ++j) f << (j ? " " : "") << g.features[i * g.feat_dim + j];
        f << "\n";
    }
    for (auto l : g.labels) f << l << "\n";
    f << "edges " << g.base.edges.size() << "\n";
    for (auto [u, v] : g.base.edges) f << u << " " << v << "\n";
    auto write_mask = [&](const char* name, const std::vector<std::int64_t>& mask) {
        f << name << ":";
        for (auto i : mask) f << " " << i;
        f << "\n";
    };
    write_mask("train", g.train_mask);
    write_mask("valid", g.valid_mask);
    write_mask("test", g.test_mask);
}

GraphTask make_two_cliques(std::int64_t per_clique, std::uint64_t seed) {
    Rng rng(seed);
    GraphTask g;
    g.n = 2 * per_clique;
    g.feat_dim = 2;
    g.classes = 2;
    g.base.n = g.n;
    g.features.resize(static_cast<std::size_t>(g.n * 2));
    g.labels.resize(static_cast<std::size_t>(g.n));
    for (std::int64_t i = 0; i < g.n; ++i) {
        const std::int64_t c = i / per_clique;
        g.labels[i] = c;
        g.features[i * 2 + c] = 1.0 + 0.2 * rng.uniform(-1.0, 1.0);
        g.features[i * 2 + (1 - c)] = 0.2 * rng.uniform(-1.0, 1.0);
    }
    for (std::int64_t c = 0; c < 2; ++c) {
        const std::int64_t base = c * per_clique;
        for (std::int64_t i = 0; i < per_clique; ++i) {
            for (std::int64_t j = i + 1; j < per_clique; ++j) {
                g.base.edges.push_back({static_cast<std::int32_t>(base + i), static_cast<std::int32_t>(base + j)});
            }
        }
    }
    // first two nodes of each clique are labeled training nodes
    for (std::int64_t c = 0; c < 2; ++c) {
        g.train_mask.push_back(c * per_clique);
        g.train_mask.push_back(c * per_clique + 1);
        g.valid_mask.push_back(c * per_clique + 2);
        for (std::int64_t i = 3; i < per_clique; ++i) g.test_mask.push_back(c * per_clique + i);
    }
    g.validate();
    return g;
}

GraphTask make_sbm(std::int64_t n, std::int64_t blocks, double p_in, double p_out, std::uint64_t seed) {
    Rng rng(seed);
    GraphTask g;
    g.n = n;
    g.feat_dim = blocks + 2;
    g.classes = blocks;
    g.base.n = n;
    g.features.resize(static_cast<std::size_t>(n * g.feat_dim));
    g.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t b = i % blocks;
        g.labels[i] = b;
        for (std::int64_t j = 0; j < g.feat_dim; ++j) g.features[i * g.feat_dim + j] = 0.3 * rng.uniform(-1.0, 1.0);
        g.features[i * g.feat_dim + b] += 1.0;
    }
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = i + 1; j < n; ++j) {
            const double p = (g.labels[i] == g.labels[j]) ? p_in : p_out;
            if (rng.uniform() < p) g.base.edges.push_back({static_cast<std::int32_t>(i), static_cast<std::int32_t>(j)});
        }
    }
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t r = i % 10;
        if (r < 3) g.train_mask.push_back(i);
        else if (r < 4) g.valid_mask.push_back(i);
        else g.test_mask.push_back(i);
    }
    g.validate();
    return g;
}

}  // namespace sac
