#pragma once

#include <string>
#include <vector>

#include "ebmvae/diagnostics.hpp"
#include "ebmvae/training.hpp"

namespace ebmvae {

// Fixed metrics schema; the last three columns stay empty when the divergence
// estimates are unavailable (never written as zeros).
inline constexpr const char* kMetricsHeader =
    "iter,energy_data,energy_initial,energy_revised,energy_gap,recon,kl_prior,"
    "vae_loss,kl_data_ebm,kl_ebm_gen,kl_enc_post";

// Appends rows to <path>, writing the header first when the file is new or
// empty. Each append opens, writes, and flushes, matching the eval cadence.
class MetricsLog {
 public:
  explicit MetricsLog(std::string path);
  const std::string& path() const { return path_; }
  void append(std::size_t iter, const LossReport& r, const DivergenceEntry* div);

 private:
  std::string path_;
};

// Minimal reader for the CSVs this project writes: comma separation, no
// quoting, first line is the header. Rejects ragged rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const;  // UsageError when absent
};

CsvTable read_csv(const std::string& path);

}  // namespace ebmvae
