#include "sisr/corpus_io.hpp"

#include <sstream>

#include "sisr/error.hpp"
#include "sisr/serialize.hpp"

namespace sisr::corpus {

namespace fs = std::filesystem;

std::string manifest_line(const PairedSample& sample) {
  std::string line = "images/" + sample.id + ".sisr\treports/" + sample.id + ".txt\t" +
                     std::to_string(sample.labels.to_ulong()) + "\t";
  if (sample.lesion_patches.empty()) {
    line += "-";
  } else {
    for (std::size_t i = 0; i < sample.lesion_patches.size(); ++i) {
      if (i) line += ',';
      line += std::to_string(sample.lesion_patches[i]);
    }
  }
  return line;
}

void write_corpus(const fs::path& dir, const std::vector<PairedSample>& samples) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "reports", ec);
  if (ec) throw IoError("cannot create corpus directory " + dir.string() + ": " + ec.message());
  std::string manifest;
  for (const auto& s : samples) {
    io::TensorBundle bundle;
    bundle.tensors.push_back({"image", image_to_tensor(s.image)});
    io::write_bundle(dir / "images" / (s.id + ".sisr"), bundle);
    io::write_file(dir / "reports" / (s.id + ".txt"), s.report + "\n");
    manifest += manifest_line(s);
    manifest += '\n';
  }
  io::write_file(dir / "manifest.tsv", manifest);
}

std::vector<PairedSample> read_corpus(const fs::path& dir) {
  const std::string manifest = io::read_file(dir / "manifest.tsv");
  std::vector<PairedSample> out;
  std::istringstream lines(manifest);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream fs_(line);
    std::string f;
    while (std::getline(fs_, f, '\t')) fields.push_back(f);
    if (fields.size() != 4) {
      throw IoError((dir / "manifest.tsv").string() + ":" + std::to_string(lineno) +
                    ": expected 4 tab-separated fields");
    }
    PairedSample s;
    s.id = fs::path(fields[0]).stem().string();
    s.image = image_from_tensor(io::read_bundle(dir / fields[0]).get("image"));
    std::string report = io::read_file(dir / fields[1]);
    while (!report.empty() && (report.back() == '\n' || report.back() == '\r')) report.pop_back();
    s.report = std::move(report);
    try {
      s.labels = ObservationLabelSet(std::stoull(fields[2]));
      if (fields[3] != "-") {
        std::istringstream ps(fields[3]);
        std::string p;
        while (std::getline(ps, p, ',')) s.lesion_patches.push_back(std::stoull(p));
      }
    } catch (const std::logic_error&) {
      throw IoError((dir / "manifest.tsv").string() + ":" + std::to_string(lineno) +
                    ": malformed label mask or patch list");
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError("corpus at " + dir.string() + " is empty");
  return out;
}

CorpusStats corpus_stats(const std::vector<PairedSample>& samples) {
  CorpusStats st;
  st.samples = samples.size();
  double patches = 0.0;
  for (const auto& s : samples) {
    if (!s.normal()) {
      ++st.abnormal;
      patches += static_cast<double>(s.lesion_patches.size());
    }
    for (std::size_t k = 0; k < kKindCount; ++k) {
      if (s.labels.test(k)) {
        ++st.per_kind[k];
        ++st.lesions;
      }
    }
  }
  if (st.abnormal > 0) st.mean_lesion_patches = patches / static_cast<double>(st.abnormal);
  return st;
}

std::string format_stats(const CorpusStats& st) {
  std::ostringstream os;
  os << "samples: " << st.samples << "\n";
  os << "abnormal: " << st.abnormal << " ("
     << (st.samples ? static_cast<double>(st.abnormal) / static_cast<double>(st.samples) : 0.0)
     << ")\n";
  os << "lesions: " << st.lesions << "\n";
  for (std::size_t k = 0; k < kKindCount; ++k)
    os << "  " << kind_name(static_cast<LesionKind>(k)) << ": " << st.per_kind[k] << "\n";
  os << "mean lesion patches per abnormal image: " << st.mean_lesion_patches << "\n";
  return os.str();
}

}  // namespace sisr::corpus
