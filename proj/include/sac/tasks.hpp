#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sac/predictor.hpp"
#include "sac/rng.hpp"

namespace sac {

struct Example {
    std::vector<std::int64_t> tokens;
    std::vector<std::int64_t> targets;  // one label (pointer) or per-position targets (char lm)
};

std::string example_to_line(const Example& ex);
Example example_from_line(const std::string& line);

// Pointer probe: the last two tokens spell an index p in base `vocab`; the
// label is the token stored at position p. Examples are a pure function of
// (n, vocab, seed, id).
class PointerTask {
  public:
    PointerTask(std::int64_t n, std::int64_t vocab, std::uint64_t seed);
    Example make(std::int64_t id) const;
    std::vector<Example> train_batch(std::int64_t step, std::int64_t batch_size) const;
    std::vector<Example> eval_set(std::int64_t count) const;  // disjoint id stream
    std::int64_t n() const { return n_; }
    std::int64_t vocab() const { return vocab_; }

  private:
    std::int64_t n_, vocab_;
    std::uint64_t seed_;
};

// Character LM over a byte corpus: windows of length n with next-byte targets,
// 95/5 train/valid split by position.
class CharLmTask {
  public:
    CharLmTask(std::vector<std::uint8_t> corpus, std::int64_t n);
    static CharLmTask load(const std::string& path, std::int64_t n);

    Example train_window(Rng& rng) const;
    std::vector<Example> train_batch(std::int64_t step, std::uint64_t seed, std::int64_t batch_size) const;
    std::vector<Example> eval_windows(std::int64_t max_windows) const;  // tiled over the valid split
    std::int64_t n() const { return n_; }
    std::int64_t corpus_size() const { return static_cast<std::int64_t>(corpus_.size()); }

  private:
    std::vector<std::uint8_t> corpus_;
    std::int64_t n_;
    std::int64_t train_end_;  // split position
};

// Deterministic pseudo-natural text (seeded word soup with punctuation).
void write_synthetic_corpus(const std::string& path, std::int64_t bytes, std::uint64_t seed);
std::vector<std::uint8_t> synthetic_corpus(std::int64_t bytes, std::uint64_t seed);

// Node classification instance.
struct GraphTask {
    std::int64_t n = 0, feat_dim = 0, classes = 0;
    std::vector<double> features;  // n x feat_dim
    std::vector<std::int64_t> labels;
    BaseGraph base;
    std::vector<std::int64_t> train_mask, valid_mask, test_mask;
    void validate() const;
};

// Text format: "N F C", N feature lines, N label lines, "edges E" + E lines
// "u v", then "train:"/"valid:"/"test:" index lists.
GraphTask load_graph_file(const std::string& path);
void save_graph_file(const GraphTask& g, const std::string& path);

GraphTask make_two_cliques(std::int64_t per_clique, std::uint64_t seed);
GraphTask make_sbm(std::int64_t n, std::int64_t blocks, double p_in, double p_out, std::uint64_t seed);

}  // namespace sac
