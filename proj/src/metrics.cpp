#include "ebmvae/metrics.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ebmvae/errors.hpp"

namespace ebmvae {

namespace {

std::string cell(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string opt_cell(const std::optional<double>& v) {
  return v.has_value() ? cell(*v) : std::string();
}

}  // namespace

MetricsLog::MetricsLog(std::string path) : path_(std::move(path)) {
  std::error_code ec;
  const auto parent = std::filesystem::path(path_).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  const bool fresh = !std::filesystem::exists(path_) ||
                     std::filesystem::file_size(path_, ec) == 0;
  if (fresh) {
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw IoError("cannot open metrics log: " + path_);
    out << kMetricsHeader << "\n";
    if (!out) throw IoError("metrics write failed: " + path_);
  }
}

void MetricsLog::append(std::size_t iter, const LossReport& r, const DivergenceEntry* div) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot open metrics log: " + path_);
  out << iter << "," << cell(r.energy_data) << "," << cell(r.energy_initial) << ","
      << cell(r.energy_revised) << "," << cell(r.energy_gap) << "," << cell(r.recon) << ","
      << cell(r.kl_prior) << "," << cell(r.vae_loss) << ",";
  if (div != nullptr)
    out << opt_cell(div->kl_data_ebm) << "," << opt_cell(div->kl_ebm_gen) << ","
        << opt_cell(div->kl_enc_post);
  else
    out << ",,";
  out << "\n";
  out.flush();
  if (!out) throw IoError("metrics write failed: " + path_);
}

std::size_t CsvTable::col(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw UsageError("no such CSV column: " + name);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CSV: " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == EOF) break;
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    // A trailing comma means a final empty field getline won't emit.
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (line.empty()) fields.emplace_back();
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != t.header.size())
        throw IoError("ragged CSV row in " + path);
      t.rows.push_back(std::move(fields));
    }
  }
  if (first) throw IoError("empty CSV: " + path);
  return t;
}

}  // namespace ebmvae
