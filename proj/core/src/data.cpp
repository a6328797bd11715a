#include "msw/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "msw/errors.hpp"

namespace msw {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string format_sample_rate(double rate) {
  std::ostringstream out;
  out << rate;
  return out.str();
}

}  // namespace

std::string signal_header_line(const DatasetHeader& h) {
  return std::to_string(h.n_leads) + " " + std::to_string(h.seq_len) + " " +
         std::to_string(h.classes) + " " + format_sample_rate(h.sample_rate) + "\n";
}

DatasetHeader read_signal_header(const std::string& signal_path) {
  std::ifstream in(signal_path, std::ios::binary);
  if (!in) throw DataError("cannot open signal file " + signal_path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(signal_path + ": missing header line");
  std::istringstream fields(line);
  DatasetHeader h;
  if (!(fields >> h.n_leads >> h.seq_len >> h.classes >> h.sample_rate)) {
    throw DataError(signal_path + ": header must be 'n_leads L K sample_rate', got '" + line + "'");
  }
  if (h.n_leads == 0 || h.seq_len == 0) throw DataError(signal_path + ": empty record shape in header");
  return h;
}

Dataset load_dataset(const std::string& signal_path, const std::string& label_path,
                     const std::vector<std::string>& expected_classes) {
  Dataset ds;
  ds.header = read_signal_header(signal_path);
  const auto& h = ds.header;

  std::ifstream labels(label_path);
  if (!labels) throw DataError("cannot open label file " + label_path);
  std::string line;
  do {
    if (!std::getline(labels, line)) throw DataError(label_path + ": missing header row");
  } while (!line.empty() && line[0] == '#');
  const auto columns = split_csv(line);
  if (columns.size() < 2 || columns[0] != "id" || columns[1] != "fold") {
    throw DataError(label_path + ": header must start with 'id,fold'");
  }
  ds.header.class_names.assign(columns.begin() + 2, columns.end());
  if (ds.header.class_names.size() != h.classes) {
    throw DataError(label_path + ": " + std::to_string(ds.header.class_names.size()) +
                    " class columns, signal header declares K=" + std::to_string(h.classes));
  }
  if (!expected_classes.empty()) {
    std::set<std::string> known(expected_classes.begin(), expected_classes.end());
    for (const auto& name : ds.header.class_names) {
      if (!known.count(name)) throw DataError(label_path + ": unknown class name '" + name + "'");
    }
  }

  std::set<std::string> ids;
  std::size_t row = 0;
  while (std::getline(labels, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    const auto where = label_path + " row " + std::to_string(row);
    if (cells.size() != h.classes + 2) {
      throw DataError(where + ": expected " + std::to_string(h.classes + 2) + " fields, got " +
                      std::to_string(cells.size()));
    }
    EcgRecord rec;
    rec.id = cells[0];
    if (rec.id.empty()) throw DataError(where + ": empty id");
    if (!ids.insert(rec.id).second) throw DataError(where + ": duplicate id '" + rec.id + "'");
    try {
      std::size_t used = 0;
      rec.fold = std::stoi(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument(cells[1]);
    } catch (const std::exception&) {
      throw DataError(where + ": fold '" + cells[1] + "' is not an integer");
    }
    rec.labels.resize(h.classes);
    for (std::size_t k = 0; k < h.classes; ++k) {
      const auto& cell = cells[k + 2];
      if (cell != "0" && cell != "1") {
        throw DataError(where + ": label for class '" + ds.header.class_names[k] +
                        "' must be 0 or 1, got '" + cell + "'");
      }
      rec.labels[k] = cell == "1" ? 1 : 0;
    }
    ds.records.push_back(std::move(rec));
  }

  std::ifstream signal(signal_path, std::ios::binary);
  std::getline(signal, line);
  const auto per_record = h.n_leads * h.seq_len;
  std::vector<char> bytes(per_record * sizeof(double));
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    if (!signal.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
      throw DataError(signal_path + ": holds fewer records than the " +
                      std::to_string(ds.records.size()) + " label rows");
    }
    auto& rec = ds.records[r];
    rec.signal.resize(per_record);
    for (std::size_t i = 0; i < per_record; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, bytes.data() + i * 8, 8);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      rec.signal[i] = std::bit_cast<double>(bits);
      if (!std::isfinite(rec.signal[i])) {
        throw DataError(signal_path + ": record " + std::to_string(r) + " ('" + rec.id +
                        "') has a non-finite sample at lead " + std::to_string(i / h.seq_len) +
                        ", index " + std::to_string(i % h.seq_len));
      }
    }
  }
  if (signal.peek() != std::char_traits<char>::eof()) {
    throw DataError(signal_path + ": holds more samples than the " +
                    std::to_string(ds.records.size()) + " label rows describe");
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& signal_path, const std::string& label_path,
                  const std::string& comment) {
  const auto& h = ds.header;
  if (h.class_names.size() != h.classes) throw DataError("class name list does not match K");
  std::ofstream signal(signal_path, std::ios::binary);
  if (!signal) throw DataError("cannot write signal file " + signal_path);
  signal << signal_header_line(h);
  for (const auto& rec : ds.records) {
    if (rec.signal.size() != h.n_leads * h.seq_len) {
      throw DataError("record " + rec.id + " does not match the dataset header shape");
    }
    for (double v : rec.signal) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      char b[8];
      std::memcpy(b, &bits, 8);
      signal.write(b, 8);
    }
  }
  if (!signal) throw DataError("write failed for " + signal_path);

  std::ofstream labels(label_path);
  if (!labels) throw DataError("cannot write label file " + label_path);
  if (!comment.empty()) {
    std::istringstream lines(comment);
    std::string text;
    while (std::getline(lines, text)) labels << "# " << text << '\n';
  }
  labels << "id,fold";
  for (const auto& name : h.class_names) labels << ',' << name;
  labels << '\n';
  for (const auto& rec : ds.records) {
    labels << rec.id << ',' << rec.fold;
    for (auto l : rec.labels) labels << ',' << static_cast<int>(l);
    labels << '\n';
  }
  if (!labels) throw DataError("write failed for " + label_path);
}

bool is_training_fold(int fold) { return fold >= 1 && fold <= 8; }

LeadStats compute_lead_stats(const Dataset& ds) {
  const auto leads = ds.header.n_leads, len = ds.header.seq_len;
  std::vector<double> sum(leads, 0.0);
  std::size_t count = 0;
  for (const auto& rec : ds.records) {
    if (!is_training_fold(rec.fold)) continue;
    ++count;
    for (std::size_t l = 0; l < leads; ++l) {
      for (double v : rec.lead(l, len)) sum[l] += v;
    }
  }
  if (count == 0) throw DataError("standardization needs at least one record in folds 1-8");
  const double n = static_cast<double>(count * len);
  LeadStats stats;
  stats.mean.resize(leads);
  stats.stddev.resize(leads);
  for (std::size_t l = 0; l < leads; ++l) stats.mean[l] = sum[l] / n;
  std::vector<double> sq(leads, 0.0);
  for (const auto& rec : ds.records) {
    if (!is_training_fold(rec.fold)) continue;
    for (std::size_t l = 0; l < leads; ++l) {
      for (double v : rec.lead(l, len)) sq[l] += (v - stats.mean[l]) * (v - stats.mean[l]);
    }
  }
  for (std::size_t l = 0; l < leads; ++l) {
    stats.stddev[l] = std::max(std::sqrt(sq[l] / n), kStdFloor);
  }
  return stats;
}

void apply_standardization(Dataset& ds, const LeadStats& stats) {
  const auto leads = ds.header.n_leads, len = ds.header.seq_len;
  if (stats.mean.size() != leads || stats.stddev.size() != leads) {
    throw DataError("standardization statistics cover " + std::to_string(stats.mean.size()) +
                    " leads, dataset has " + std::to_string(leads));
  }
  for (auto& rec : ds.records) {
    for (std::size_t l = 0; l < leads; ++l) {
      for (std::size_t i = 0; i < len; ++i) {
        auto& v = rec.signal[l * len + i];
        v = (v - stats.mean[l]) / stats.stddev[l];
      }
    }
  }
  ds.stats = stats;
}

Dataset standardize(const Dataset& ds) {
  Dataset out = ds;
  apply_standardization(out, compute_lead_stats(ds));
  return out;
}

FoldSplit fold_split(const Dataset& ds) {
  FoldSplit split;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const int fold = ds.records[i].fold;
    if (fold < 1 || fold > 10) {
      throw DataError("record '" + ds.records[i].id + "' has fold " + std::to_string(fold) +
                      " outside 1-10");
    }
    if (fold <= 8) split.train.push_back(i);
    else if (fold == 9) split.val.push_back(i);
    else split.test.push_back(i);
  }
  if (split.train.empty()) split.warnings.emplace_back("training folds 1-8 are empty");
  if (split.val.empty()) split.warnings.emplace_back("validation fold 9 is empty");
  if (split.test.empty()) split.warnings.emplace_back("test fold 10 is empty");
  return split;
}

}  // namespace msw
