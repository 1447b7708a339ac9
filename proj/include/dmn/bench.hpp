#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>

#include "dmn/recurrent.hpp"

namespace dmn {

struct BenchReport {
  int d = 0, T = 0, reps = 0, layers = 0;
  Scalar sru_median_ms = 0;
  Scalar lstm_median_ms = 0;
  long sru_params = 0;
  long lstm_params = 0;
  Scalar speedup() const { return lstm_median_ms / sru_median_ms; }
};

namespace detail {

template <class F>
Scalar median_ms(int reps, F body) {
  std::vector<Scalar> times;
  times.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    body();
    auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<Scalar, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace detail

// Median forward+backward wall-clock for sru_scan vs lstm_scan on identical
// shapes. Single-threaded by construction (the kernels do not spawn threads).
inline BenchReport bench_recurrent(int d, int T, int reps, int layers = 2, uint64_t seed = 0) {
  check(reps >= 10, "bench_recurrent: reps must be at least 10");
  Rng rng(seed);
  SruStack sru(d, d, layers, rng);
  LstmStack lstm(d, d, layers, rng);
  std::vector<Tensor> seq;
  for (int t = 0; t < T; ++t) seq.push_back(random_tensor({d}, rng, -1, 1));

  BenchReport rep;
  rep.d = d;
  rep.T = T;
  rep.reps = reps;
  rep.layers = layers;
  rep.sru_params = sru_stack_param_count(d, d, layers);
  rep.lstm_params = lstm_stack_param_count(d, d, layers);

  NamedParams sru_p, lstm_p;
  sru.params("sru", sru_p);
  lstm.params("lstm", lstm_p);
  auto clear = [](NamedParams& ps) {
    for (auto& [n, p] : ps) const_cast<Tensor&>(p).clear_grad();
  };

  rep.sru_median_ms = detail::median_ms(reps, [&] {
    Tensor loss = sum(sru_scan(seq, sru).back());
    loss.backward();
    clear(sru_p);
  });
  rep.lstm_median_ms = detail::median_ms(reps, [&] {
    Tensor loss = sum(lstm_scan(seq, lstm).back());
    loss.backward();
    clear(lstm_p);
  });
  return rep;
}

inline std::string bench_text(const BenchReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "recurrent benchmark: d=%d T=%d layers=%d reps=%d\n"
                "  SRU : median %.3f ms/iter, %ld params\n"
                "  LSTM: median %.3f ms/iter, %ld params\n"
                "  LSTM/SRU time ratio: %.2fx, param ratio: %.2fx\n",
                r.d, r.T, r.layers, r.reps, r.sru_median_ms, r.sru_params, r.lstm_median_ms,
                r.lstm_params, r.speedup(), (Scalar)r.lstm_params / (Scalar)r.sru_params);
  return buf;
}

inline void bench_csv(const BenchReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open benchmark report for writing: " + path);
  f << "kernel,d,T,layers,reps,median_ms,params\n";
  f << "sru," << r.d << "," << r.T << "," << r.layers << "," << r.reps << ","
    << r.sru_median_ms << "," << r.sru_params << "\n";
  f << "lstm," << r.d << "," << r.T << "," << r.layers << "," << r.reps << ","
    << r.lstm_median_ms << "," << r.lstm_params << "\n";
  if (!f) throw IoError("failed writing benchmark report: " + path);
}

}  // namespace dmn
