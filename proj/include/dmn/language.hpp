#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "dmn/recurrent.hpp"

namespace dmn {

// Lowercases and splits on anything that is not a letter or digit.
inline std::vector<std::string> tokenize(const std::string& query) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : query) {
    if (std::isalnum((unsigned char)ch)) {
      cur.push_back((char)std::tolower((unsigned char)ch));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  check(!out.empty(), "tokenize: empty query after normalization");
  return out;
}

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kOov = 1;

  Vocabulary() {
    add("<pad>");
    add("<oov>");
  }

  int add(const std::string& token) {
    auto it = map_.find(token);
    if (it != map_.end()) return it->second;
    int id = (int)tokens_.size();
    tokens_.push_back(token);
    map_[token] = id;
    return id;
  }

  int id(const std::string& token) const {
    auto it = map_.find(token);
    return it == map_.end() ? kOov : it->second;
  }

  const std::string& token(int id) const { return tokens_[id]; }
  int size() const { return (int)tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::string& query) const {
    std::vector<int> ids;
    for (const auto& tok : tokenize(query)) ids.push_back(id(tok));
    return ids;
  }

  void add_query(const std::string& query) {
    for (const auto& tok : tokenize(query)) add(tok);
  }

  // one token per line, line number = id
  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open vocabulary file for writing: " + path);
    for (const auto& t : tokens_) f << t << "\n";
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open vocabulary file: " + path);
    Vocabulary v;
    v.tokens_.clear();
    v.map_.clear();
    std::string line;
    while (std::getline(f, line)) v.add(line);
    check(v.size() >= 2, "vocabulary file too short: " + path);
    return v;
  }

 private:
  std::unordered_map<std::string, int> map_;
  std::vector<std::string> tokens_;
};

// K affine maps producing per-word dynamic filters via sigmoid.
struct FilterGenerator {
  std::vector<Tensor> W, b;  // W_k: (filter_len, r_width)

  FilterGenerator() = default;
  FilterGenerator(int k, int filter_len, int r_width, Rng& rng) {
    check(k >= 1, "FilterGenerator: K must be at least 1");
    for (int i = 0; i < k; ++i) {
      W.push_back(init_uniform({filter_len, r_width}, r_width, rng));
      b.push_back(Tensor::zeros({filter_len}, true));
    }
  }

  int k() const { return (int)W.size(); }

  void params(const std::string& prefix, NamedParams& out) const {
    for (size_t i = 0; i < W.size(); ++i) {
      out.emplace_back(prefix + ".W" + std::to_string(i), W[i]);
      out.emplace_back(prefix + ".b" + std::to_string(i), b[i]);
    }
  }
};

struct LanguageOutput {
  std::vector<Tensor> r_seq;               // r_t = [e_t, h_t] (or h_t under ablation)
  std::vector<std::vector<Tensor>> filters;  // filters[t][k], each sigmoid-bounded
};

// r_t = [e_t, h_t]; f_{k,t} = sigmoid(W_k r_t + b_k).
inline LanguageOutput lm_forward(const std::vector<int>& ids, const Tensor& embedding,
                                 const SruStack& stack, const FilterGenerator& gen,
                                 bool r_is_h = false) {
  check(!ids.empty(), "lm_forward: empty token sequence");
  int vocab_size = embedding.dim(0);
  std::vector<Tensor> embedded;
  for (int id : ids) {
    check(id >= 0 && id < vocab_size, "lm_forward: token id " + std::to_string(id) +
                                          " out of range [0," + std::to_string(vocab_size) + ")");
    embedded.push_back(row(embedding, id));
  }
  std::vector<Tensor> hidden = sru_scan(embedded, stack);

  LanguageOutput out;
  for (size_t t = 0; t < ids.size(); ++t) {
    Tensor r = r_is_h ? hidden[t] : concat({embedded[t], hidden[t]});
    out.r_seq.push_back(r);
    std::vector<Tensor> f_t;
    for (int k = 0; k < gen.k(); ++k) f_t.push_back(sigmoid(affine(r, gen.W[k], gen.b[k])));
    out.filters.push_back(std::move(f_t));
  }
  return out;
}

}  // namespace dmn
