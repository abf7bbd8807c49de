#include "causalma/ipd_data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>

#include "causalma/csv.hpp"
#include "causalma/error.hpp"

namespace causalma {
namespace {

std::string where(std::span<const std::size_t> lines, std::size_t index) {
  if (index < lines.size()) return fmt::format("line {}", lines[index]);
  return fmt::format("record {}", index);
}

}  // namespace

IpdDataset IpdDataset::from_records(std::span<const IpdRecord> records) {
  return from_records(records, {});
}

IpdDataset IpdDataset::from_records(std::span<const IpdRecord> records,
                                    std::span<const std::size_t> source_lines) {
  if (records.empty()) throw Error(ErrorKind::EmptyStudy, "dataset has no records");

  const std::size_t d = records.front().covariates.size();
  std::set<std::string> arm_set;
  int max_study = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const IpdRecord& rec = records[i];
    if (rec.covariates.size() != d) {
      throw Error(ErrorKind::InconsistentDimension,
                  fmt::format("{} has {} covariates, expected {}", where(source_lines, i),
                              rec.covariates.size(), d));
    }
    for (double x : rec.covariates) {
      if (!std::isfinite(x)) {
        throw Error(ErrorKind::InvalidRecord,
                    fmt::format("{} has a non-finite covariate", where(source_lines, i)));
      }
    }
    if (rec.study < 0) {
      throw Error(ErrorKind::InvalidRecord,
                  fmt::format("{} has negative study label {}", where(source_lines, i), rec.study));
    }
    if (rec.study == 0) {
      if (rec.treatment || rec.outcome) {
        throw Error(ErrorKind::TargetWithOutcome,
                    fmt::format("{}: target-population row carries a treatment or outcome",
                                where(source_lines, i)));
      }
      if (rec.in_trial) {
        throw Error(ErrorKind::InvalidRecord,
                    fmt::format("{}: study 0 row has r=1", where(source_lines, i)));
      }
    } else {
      if (!rec.in_trial) {
        throw Error(ErrorKind::InvalidRecord,
                    fmt::format("{}: trial row (study {}) has r=0", where(source_lines, i), rec.study));
      }
      if (!rec.treatment || rec.treatment->empty() || !rec.outcome) {
        throw Error(ErrorKind::InvalidRecord,
                    fmt::format("{}: trial row is missing treatment or outcome", where(source_lines, i)));
      }
      if (!std::isfinite(*rec.outcome)) {
        throw Error(ErrorKind::InvalidRecord,
                    fmt::format("{}: non-finite outcome", where(source_lines, i)));
      }
      arm_set.insert(*rec.treatment);
      max_study = std::max(max_study, rec.study);
    }
  }
  if (max_study == 0) throw Error(ErrorKind::EmptyStudy, "dataset contains no trial records");

  IpdDataset ds;
  ds.num_studies_ = max_study;
  ds.arms_.assign(arm_set.begin(), arm_set.end());
  const std::size_t n = records.size();
  ds.subject_ids_.reserve(n);
  ds.study_.reserve(n);
  ds.arm_.reserve(n);
  ds.outcome_.reserve(n);
  ds.covariates_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.trial_rows_.assign(static_cast<std::size_t>(max_study), {});
  ds.arm_rows_.assign(static_cast<std::size_t>(max_study),
                      std::vector<std::vector<std::size_t>>(ds.arms_.size()));

  for (std::size_t i = 0; i < n; ++i) {
    const IpdRecord& rec = records[i];
    ds.subject_ids_.push_back(rec.subject_id);
    ds.study_.push_back(rec.study);
    for (std::size_t j = 0; j < d; ++j) {
      ds.covariates_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rec.covariates[j];
    }
    if (rec.study == 0) {
      ds.arm_.push_back(kNoArm);
      ds.outcome_.push_back(std::numeric_limits<double>::quiet_NaN());
      ds.target_rows_.push_back(i);
    } else {
      const auto pos = std::lower_bound(ds.arms_.begin(), ds.arms_.end(), *rec.treatment);
      const int arm = static_cast<int>(pos - ds.arms_.begin());
      ds.arm_.push_back(arm);
      ds.outcome_.push_back(*rec.outcome);
      const auto s = static_cast<std::size_t>(rec.study - 1);
      ds.trial_rows_[s].push_back(i);
      ds.arm_rows_[s][static_cast<std::size_t>(arm)].push_back(i);
    }
  }

  if (ds.target_rows_.empty()) {
    throw Error(ErrorKind::EmptyTarget, "dataset has no target-population (study 0) rows");
  }
  for (int s = 1; s <= max_study; ++s) {
    const auto& rows = ds.trial_rows_[static_cast<std::size_t>(s - 1)];
    if (rows.size() < 2) {
      throw Error(ErrorKind::EmptyStudy,
                  fmt::format("study {} has {} rows; study labels must be 0..m with at least 2 rows "
                              "per trial",
                              s, rows.size()));
    }
    for (std::size_t a = 0; a < ds.arms_.size(); ++a) {
      if (ds.arm_rows_[static_cast<std::size_t>(s - 1)][a].empty()) {
        throw Error(ErrorKind::ArmSetMismatch,
                    fmt::format("study {} has no participants on arm '{}'", s, ds.arms_[a]));
      }
    }
  }
  return ds;
}

std::size_t IpdDataset::study_size(int study) const {
  if (study == 0) return target_rows_.size();
  check_trial(study);
  return trial_rows_[static_cast<std::size_t>(study - 1)].size();
}

const std::string& IpdDataset::arm_label(int arm) const {
  if (arm < 0 || static_cast<std::size_t>(arm) >= arms_.size()) {
    throw Error(ErrorKind::UnknownArm, fmt::format("arm index {} out of range", arm));
  }
  return arms_[static_cast<std::size_t>(arm)];
}

int IpdDataset::arm_index(std::string_view label) const {
  const auto pos = std::lower_bound(arms_.begin(), arms_.end(), label);
  if (pos == arms_.end() || *pos != label) {
    throw Error(ErrorKind::UnknownArm, fmt::format("treatment '{}' is not in the dataset", label));
  }
  return static_cast<int>(pos - arms_.begin());
}

bool IpdDataset::has_arm(std::string_view label) const noexcept {
  return std::binary_search(arms_.begin(), arms_.end(), label);
}

void IpdDataset::check_trial(int study) const {
  if (study < 1 || study > num_studies_) {
    throw Error(ErrorKind::UnknownStudy,
                fmt::format("study {} is not a trial label (valid: 1..{})", study, num_studies_));
  }
}

IpdRecord IpdDataset::record(std::size_t row) const {
  IpdRecord rec;
  rec.subject_id = subject_ids_.at(row);
  rec.study = study_[row];
  rec.in_trial = rec.study != 0;
  if (rec.in_trial) {
    rec.treatment = arms_[static_cast<std::size_t>(arm_[row])];
    rec.outcome = outcome_[row];
  }
  const auto r = covariates_.row(static_cast<Eigen::Index>(row));
  rec.covariates.assign(r.data(), r.data() + r.size());
  return rec;
}

std::vector<IpdRecord> IpdDataset::records() const {
  std::vector<IpdRecord> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(record(i));
  return out;
}

std::span<const std::size_t> IpdDataset::trial_rows(int study) const {
  check_trial(study);
  return trial_rows_[static_cast<std::size_t>(study - 1)];
}

std::span<const std::size_t> IpdDataset::arm_rows(int study, int arm) const {
  check_trial(study);
  arm_label(arm);
  return arm_rows_[static_cast<std::size_t>(study - 1)][static_cast<std::size_t>(arm)];
}

Split split(const IpdDataset& dataset, int study, std::string_view arm) {
  dataset.check_trial(study);
  const int a = dataset.arm_index(arm);
  const auto rows = dataset.arm_rows(study, a);
  const auto target = dataset.target_rows();
  return Split{{rows.begin(), rows.end()}, {target.begin(), target.end()}};
}

// ---------------------------------------------------------------------------
// CSV ingestion

ColumnMapping ColumnMapping::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, fmt::format("schema file {}: {}", path.string(), e.what()));
  }
  if (!j.is_object()) throw Error(ErrorKind::ParseError, "schema file must hold a JSON object");
  ColumnMapping m;
  auto take = [&](const char* key, std::string& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::string>();
  };
  try {
    take("subject_id", m.subject_id);
    take("study", m.study);
    take("r", m.r);
    take("treatment", m.treatment);
    take("outcome", m.outcome);
    if (j.contains("covariates")) m.covariates = j.at("covariates").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, fmt::format("schema file {}: {}", path.string(), e.what()));
  }
  return m;
}

namespace {

std::size_t column_of(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorKind::MissingColumn, fmt::format("no column named '{}'", name));
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<std::size_t> covariate_columns(const std::vector<std::string>& header,
                                           const ColumnMapping& schema) {
  std::vector<std::size_t> cols;
  if (!schema.covariates.empty()) {
    for (const auto& name : schema.covariates) cols.push_back(column_of(header, name));
    return cols;
  }
  std::map<long, std::size_t> by_index;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h.size() < 2 || h[0] != 'x') continue;
    long k = 0;
    const auto [ptr, ec] = std::from_chars(h.data() + 1, h.data() + h.size(), k);
    if (ec == std::errc{} && ptr == h.data() + h.size() && k > 0) by_index.emplace(k, c);
  }
  if (by_index.empty()) throw Error(ErrorKind::MissingColumn, "no covariate columns (x1..xd) found");
  long expected = 1;
  for (const auto& [k, c] : by_index) {
    if (k != expected) throw Error(ErrorKind::MissingColumn, fmt::format("covariate column x{} missing", expected));
    cols.push_back(c);
    ++expected;
  }
  return cols;
}

double parse_double(const std::string& text, std::size_t line, const std::string& column) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first < last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last) {
    throw Error(ErrorKind::ParseError,
                fmt::format("line {}, column '{}': '{}' is not a number", line, column, text));
  }
  return value;
}

long parse_integer(const std::string& text, std::size_t line, const std::string& column) {
  const double v = parse_double(text, line, column);
  if (v != std::floor(v) || std::abs(v) > 1e9) {
    throw Error(ErrorKind::ParseError,
                fmt::format("line {}, column '{}': '{}' is not an integer", line, column, text));
  }
  return static_cast<long>(v);
}

}  // namespace

IpdDataset read_ipd(std::istream& in, const ColumnMapping& schema) {
  const csv::Table table = csv::read(in);
  const auto& header = table.header;
  const std::size_t c_id = column_of(header, schema.subject_id);
  const std::size_t c_study = column_of(header, schema.study);
  const std::size_t c_r = column_of(header, schema.r);
  const std::size_t c_treat = column_of(header, schema.treatment);
  const std::size_t c_out = column_of(header, schema.outcome);
  const std::vector<std::size_t> c_x = covariate_columns(header, schema);

  std::vector<IpdRecord> records;
  std::vector<std::size_t> lines;
  records.reserve(table.rows.size());
  lines.reserve(table.rows.size());
  for (const csv::Row& row : table.rows) {
    if (row.fields.size() != header.size()) {
      throw Error(ErrorKind::InconsistentDimension,
                  fmt::format("line {} has {} fields, header has {}", row.line, row.fields.size(),
                              header.size()));
    }
    const auto& f = row.fields;
    IpdRecord rec;
    rec.subject_id = f[c_id];
    rec.study = static_cast<int>(parse_integer(f[c_study], row.line, header[c_study]));
    const long r = parse_integer(f[c_r], row.line, header[c_r]);
    if (r != 0 && r != 1) {
      throw Error(ErrorKind::ParseError,
                  fmt::format("line {}, column '{}': r must be 0 or 1", row.line, header[c_r]));
    }
    rec.in_trial = r == 1;
    if (!f[c_treat].empty()) rec.treatment = f[c_treat];
    if (!f[c_out].empty()) rec.outcome = parse_double(f[c_out], row.line, header[c_out]);
    rec.covariates.reserve(c_x.size());
    for (std::size_t c : c_x) {
      if (f[c].empty()) {
        throw Error(ErrorKind::InconsistentDimension,
                    fmt::format("line {}, column '{}': missing covariate", row.line, header[c]));
      }
      rec.covariates.push_back(parse_double(f[c], row.line, header[c]));
    }
    records.push_back(std::move(rec));
    lines.push_back(row.line);
  }
  return IpdDataset::from_records(records, lines);
}

IpdDataset load_ipd(const std::filesystem::path& path, const ColumnMapping& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open " + path.string());
  return read_ipd(in, schema);
}

void write_ipd(std::ostream& out, const IpdDataset& dataset) {
  out << "subject_id,study,r,treatment,outcome";
  for (std::size_t j = 1; j <= dataset.dimension(); ++j) out << ",x" << j;
  out << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const IpdRecord rec = dataset.record(i);
    out << csv::escape(rec.subject_id) << ',' << rec.study << ',' << (rec.in_trial ? 1 : 0) << ',';
    if (rec.treatment) out << csv::escape(*rec.treatment);
    out << ',';
    if (rec.outcome) out << fmt::format("{}", *rec.outcome);
    for (double x : rec.covariates) out << ',' << fmt::format("{}", x);
    out << '\n';
  }
}

void save_ipd(const std::filesystem::path& path, const IpdDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
  write_ipd(out, dataset);
}

}  // namespace causalma
