#pragma once

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <string>

#include "camadapt/eval.hpp"
#include "camadapt/trainer.hpp"

namespace camadapt {

// Shortest decimal representation that round-trips the exact double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path);
  return out;
}

inline void append_record(std::ostream& out, const IterationRecord& r) {
  out << r.iteration << "," << r.n_clusters << "," << r.n_noise << ","
      << format_double(r.pseudo_fscore) << "," << format_double(r.mAP) << ","
      << format_double(r.cmc1) << "," << format_double(r.cmc5) << ","
      << format_double(r.cmc10) << "," << format_double(r.J) << ","
      << format_double(r.mean_L_div) << "," << format_double(r.mean_L_tri)
      << "\n";
}

constexpr const char* kHistoryHeader =
    "iteration,n_clusters,n_noise,pseudo_fscore,mAP,cmc1,cmc5,cmc10,J,"
    "mean_L_div,mean_L_tri";

inline void write_history_csv(const std::string& path, const History& h) {
  std::ofstream out = open_csv(path);
  out << kHistoryHeader << "\n";
  for (const IterationRecord& r : h) append_record(out, r);
}

inline void write_final_metrics_csv(const std::string& path,
                                    const IterationRecord& final_record) {
  std::ofstream out = open_csv(path);
  out << kHistoryHeader << "\n";
  append_record(out, final_record);
}

}  // namespace camadapt
