#include "fas/data.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

#include "fas/csv.hpp"

namespace fas {

std::string to_string(Split split) { return split == Split::train ? "train" : "validation"; }

std::vector<ManifestRecord> read_manifest(std::istream& in) {
  CsvReader reader(in, {"path", "label", "dataset", "split"});
  std::vector<ManifestRecord> records;
  while (auto row = reader.next()) {
    ManifestRecord r;
    r.path = row->at(0);
    if (r.path.empty()) reader.fail("empty path");
    const std::string& label = row->at(1);
    if (label != "0" && label != "1") reader.fail("label must be 0 or 1, got '" + label + "'");
    r.label = label == "1" ? 1 : 0;
    r.dataset = row->at(2);
    const std::string& split = row->at(3);
    if (split == "train") {
      r.split = Split::train;
    } else if (split == "validation") {
      r.split = Split::validation;
    } else {
      reader.fail("split must be 'train' or 'validation', got '" + split + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest manifest;
  manifest.base_dir = path.parent_path();
  try {
    manifest.records = read_manifest(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return manifest;
}

void write_manifest(std::ostream& out, const std::vector<ManifestRecord>& records) {
  out << "path,label,dataset,split\n";
  for (const auto& r : records) out << r.path << ',' << r.label << ',' << r.dataset << ',' << to_string(r.split) << '\n';
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  write_manifest(out, records);
}

namespace {

std::filesystem::path resolve(const Manifest& manifest, const std::string& path) {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : manifest.base_dir / p;
}

}  // namespace

std::vector<Sample> load_samples(const Manifest& manifest, Split split) {
  std::vector<Sample> samples;
  for (const auto& r : manifest.records) {
    if (r.split != split) continue;
    samples.push_back(Sample{load_image(resolve(manifest, r.path)), r.label, r.path, r.dataset});
  }
  return samples;
}

std::vector<Image> load_unlabeled(const Manifest& manifest) {
  std::vector<Image> images;
  for (const auto& r : manifest.records) images.push_back(load_image(resolve(manifest, r.path)));
  return images;
}

std::size_t SplitStats::total() const {
  std::size_t n = 0;
  for (const auto& [key, count] : by_dataset) n += count;
  return n;
}

SplitStats split_stats(const std::vector<ManifestRecord>& records) {
  SplitStats stats;
  for (const auto& r : records) {
    ++stats.by_dataset[{r.dataset, r.split}];
    ++stats.by_label[{r.split, r.label}];
  }
  return stats;
}

void render_split_stats(std::ostream& out, const SplitStats& stats) {
  std::size_t name_width = 8;
  for (const auto& [key, count] : stats.by_dataset) name_width = std::max(name_width, key.first.size() + 2);
  const int w = static_cast<int>(name_width);
  out << std::left << std::setw(w) << "Dataset" << std::setw(12) << "Split" << std::right << std::setw(10) << "Total"
      << '\n';
  for (const auto& [key, count] : stats.by_dataset) {
    out << std::left << std::setw(w) << key.first << std::setw(12) << to_string(key.second) << std::right
        << std::setw(10) << count << '\n';
  }
  out << '\n'
      << std::left << std::setw(12) << "Split" << std::right << std::setw(18) << "Label 0 (Normal)" << std::setw(18)
      << "Label 1 (Attack)" << '\n';
  for (Split split : {Split::train, Split::validation}) {
    auto count = [&](int label) {
      auto it = stats.by_label.find({split, label});
      return it == stats.by_label.end() ? std::size_t{0} : it->second;
    };
    out << std::left << std::setw(12) << to_string(split) << std::right << std::setw(18) << count(0) << std::setw(18)
        << count(1) << '\n';
  }
}

void write_split_stats_csv(std::ostream& out, const SplitStats& stats) {
  out << "table,key,split,count\n";
  for (const auto& [key, count] : stats.by_dataset) {
    out << "dataset," << key.first << ',' << to_string(key.second) << ',' << count << '\n';
  }
  for (const auto& [key, count] : stats.by_label) {
    out << "label," << key.second << ',' << to_string(key.first) << ',' << count << '\n';
  }
}

}  // namespace fas
