#include "massseg/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace massseg {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// PGM

namespace {

class PgmHeaderReader {
 public:
  explicit PgmHeaderReader(const std::string& s) : s_(s) {}

  long next_int() {
    skip_space_and_comments();
    if (pos_ >= s_.size() || s_[pos_] < '0' || s_[pos_] > '9') throw DataError("PGM: malformed header");
    long v = 0;
    while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') {
      v = v * 10 + (s_[pos_++] - '0');
      if (v > 1'000'000'000) throw DataError("PGM: header value too large");
    }
    return v;
  }
  std::size_t pos() const { return pos_; }
  void skip_single_whitespace() {
    if (pos_ >= s_.size() || !std::isspace(static_cast<unsigned char>(s_[pos_]))) {
      throw DataError("PGM: missing whitespace before raster");
    }
    ++pos_;
  }
  void expect_magic() {
    if (s_.size() < 2 || s_[0] != 'P' || s_[1] != '5') throw DataError("PGM: not a binary graymap (P5)");
    pos_ = 2;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < s_.size()) {
      if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
        ++pos_;
      } else if (s_[pos_] == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

RawImage parse_pgm(const std::string& bytes) {
  PgmHeaderReader r(bytes);
  r.expect_magic();
  const long w = r.next_int(), h = r.next_int(), maxval = r.next_int();
  if (w < 1 || h < 1) throw DataError("PGM: bad dimensions");
  if (maxval < 1 || maxval > 65535) throw DataError("PGM: maxval out of range");
  r.skip_single_whitespace();
  const int depth = maxval < 256 ? 8 : 16;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  const std::size_t need = n * (depth == 8 ? 1 : 2);
  if (bytes.size() - r.pos() < need) throw DataError("PGM: truncated raster");
  std::vector<std::uint16_t> samples(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + r.pos());
  for (std::size_t i = 0; i < n; ++i) {
    samples[i] = depth == 8 ? p[i] : static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
    if (samples[i] > maxval) throw DataError("PGM: sample exceeds maxval");
  }
  return RawImage({static_cast<int>(w), static_cast<int>(h)}, depth, std::move(samples));
}

RawImage read_pgm(const fs::path& path) {
  try {
    return parse_pgm(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string encode_pgm(const RawImage& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n" +
                    std::to_string(img.max_value()) + "\n";
  for (auto s : img.samples()) {
    if (img.bit_depth() == 8) {
      out.push_back(static_cast<char>(s));
    } else {
      out.push_back(static_cast<char>(s >> 8));
      out.push_back(static_cast<char>(s & 0xff));
    }
  }
  return out;
}

void write_pgm(const fs::path& path, const RawImage& img) { write_file(path, encode_pgm(img)); }

RawImage mask_to_image(const LabelMask& mask) {
  std::vector<std::uint16_t> s(mask.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = mask[i] == kMass ? 255 : 0;
  return RawImage(mask.lattice(), 8, std::move(s));
}

LabelMask image_to_mask(const RawImage& img) {
  std::vector<Label> labels(img.samples().size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = img.samples()[i] ? kMass : kBackground;
  return LabelMask(img.lattice(), std::move(labels));
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<ManifestRecord> DatasetManifest::split(Split s) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(r);
  }
  return out;
}

namespace {

double parse_number(const std::string& field, std::size_t lineno) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(field, &pos);
    if (pos == field.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("manifest line " + std::to_string(lineno) + ": bad number '" + field + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text, const fs::path& base_dir) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::string cur;
    std::istringstream ls(line);
    while (std::getline(ls, cur, '\t')) f.push_back(cur);
    if (f.size() != 6) {
      throw DataError("manifest line " + std::to_string(lineno) + ": expected 6 tab-separated fields");
    }
    ManifestRecord r;
    r.image = fs::path(f[0]).is_absolute() ? fs::path(f[0]) : base_dir / f[0];
    r.mask = fs::path(f[1]).is_absolute() ? fs::path(f[1]) : base_dir / f[1];
    r.annotation = {parse_number(f[2], lineno), parse_number(f[3], lineno), parse_number(f[4], lineno)};
    if (!(r.annotation.scale > 0.0)) {
      throw DataError("manifest line " + std::to_string(lineno) + ": scale must be > 0");
    }
    if (f[5] == "train") {
      r.split = Split::train;
    } else if (f[5] == "test") {
      r.split = Split::test;
    } else {
      throw DataError("manifest line " + std::to_string(lineno) + ": split must be train or test");
    }
    m.records.push_back(std::move(r));
  }
  std::set<fs::path> train_images;
  for (const auto& r : m.records) {
    if (r.split == Split::train) train_images.insert(r.image.lexically_normal());
  }
  for (const auto& r : m.records) {
    if (r.split == Split::test && train_images.count(r.image.lexically_normal())) {
      throw DataError("manifest: image '" + r.image.string() + "' appears in both train and test");
    }
  }
  return m;
}

DatasetManifest read_manifest(const fs::path& path, bool check_files) {
  auto m = parse_manifest(read_file(path), path.parent_path());
  if (check_files) {
    for (const auto& r : m.records) {
      if (!fs::exists(r.image)) throw DataError("manifest: missing image '" + r.image.string() + "'");
      if (!fs::exists(r.mask)) throw DataError("manifest: missing mask '" + r.mask.string() + "'");
    }
  }
  return m;
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) {
    out += r.image.generic_string() + '\t' + r.mask.generic_string() + '\t' +
           fmt(r.annotation.center_x) + '\t' + fmt(r.annotation.center_y) + '\t' +
           fmt(r.annotation.scale) + '\t' + (r.split == Split::train ? "train" : "test") + '\n';
  }
  return out;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  write_file(path, format_manifest(manifest));
}

// ---------------------------------------------------------------------------
// Model file: magic, u32 version, then tagged length-prefixed sections.
// All integers and doubles are little-endian.

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void bytes(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  void section(const char tag[4], const Writer& body) {
    raw(tag, 4);
    bytes(body.buf_);
  }
  const std::string& str() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view s) : s_(s) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::vector<double> f64s() {
    const auto n = u64();
    if (n > (s_.size() - pos_) / 8) throw DataError("model file: truncated array");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::string_view bytes() {
    const auto n = u64();
    if (n > s_.size() - pos_) throw DataError("model file: truncated section");
    auto out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string_view raw(std::size_t n) {
    if (n > s_.size() - pos_) throw DataError("model file: truncated");
    auto out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  std::uint64_t get(int n) {
    if (static_cast<std::size_t>(n) > s_.size() - pos_) throw DataError("model file: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += n;
    return v;
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

void write_mixture(Writer& w, const Mixture& m) {
  w.u32(static_cast<std::uint32_t>(m.components.size()));
  for (const auto& c : m.components) {
    w.f64(c.weight);
    w.f64(c.mean);
    w.f64(c.variance);
  }
}

Mixture read_mixture(Reader& r) {
  Mixture m;
  const auto n = r.u32();
  if (n > 1'000'000) throw DataError("model file: implausible component count");
  m.components.resize(n);
  for (auto& c : m.components) {
    c.weight = r.f64();
    c.mean = r.f64();
    c.variance = r.f64();
  }
  return m;
}

void write_rbm(Writer& w, const RbmLayer& l) {
  w.u64(l.visible_count);
  w.u64(l.hidden_count);
  w.f64s(l.weights);
  w.f64s(l.visible_bias);
  w.f64s(l.hidden_bias);
}

RbmLayer read_rbm(Reader& r) {
  RbmLayer l;
  l.visible_count = r.u64();
  l.hidden_count = r.u64();
  l.weights = r.f64s();
  l.visible_bias = r.f64s();
  l.hidden_bias = r.f64s();
  if (l.weights.size() != l.visible_count * l.hidden_count || l.visible_bias.size() != l.visible_count ||
      l.hidden_bias.size() != l.hidden_count) {
    throw DataError("model file: inconsistent RBM layer");
  }
  return l;
}

}  // namespace

std::string encode_model(const TrainedModel& model) {
  Writer out;
  out.raw(kModelMagic, sizeof kModelMagic);
  out.u32(kModelFormatVersion);

  Writer conf;
  conf.bytes(format_config(model.config));
  out.section("CONF", conf);

  Writer prior;
  prior.i32(model.prior.lattice.width);
  prior.i32(model.prior.lattice.height);
  prior.f64(model.prior.eps);
  prior.f64s(model.prior.prob);
  out.section("PRIO", prior);

  Writer gmm;
  gmm.f64(model.gmm.eps);
  write_mixture(gmm, model.gmm.mass);
  write_mixture(gmm, model.gmm.background);
  out.section("GMM ", gmm);

  Writer dbn;
  dbn.u32(static_cast<std::uint32_t>(model.dbns.size()));
  for (const auto& d : model.dbns) {
    dbn.i32(d.patch_size);
    dbn.u32(static_cast<std::uint32_t>(d.layers.size()));
    for (const auto& l : d.layers) write_rbm(dbn, l);
    write_rbm(dbn, d.top);
  }
  out.section("DBN ", dbn);

  Writer wt;
  wt.f64s(model.weights.unary);
  wt.f64s(model.weights.pairwise);
  out.section("WGHT", wt);
  return out.str();
}

TrainedModel decode_model(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof kModelMagic) != std::string_view(kModelMagic, sizeof kModelMagic)) {
    throw DataError("not a massseg model file (bad magic)");
  }
  const auto version = r.u32();
  if (version != kModelFormatVersion) {
    throw DataError("unsupported model format version " + std::to_string(version));
  }
  TrainedModel m;
  std::set<std::string> seen;
  while (!r.done()) {
    const std::string tag(r.raw(4));
    Reader body(r.bytes());
    if (!seen.insert(tag).second) throw DataError("model file: duplicate section " + tag);
    if (tag == "CONF") {
      try {
        m.config = parse_config(std::string(body.bytes()));
      } catch (const std::invalid_argument& e) {
        throw DataError(std::string("model file: ") + e.what());
      }
    } else if (tag == "PRIO") {
      m.prior.lattice.width = body.i32();
      m.prior.lattice.height = body.i32();
      m.prior.eps = body.f64();
      m.prior.prob = body.f64s();
    } else if (tag == "GMM ") {
      m.gmm.eps = body.f64();
      m.gmm.mass = read_mixture(body);
      m.gmm.background = read_mixture(body);
    } else if (tag == "DBN ") {
      const auto n = body.u32();
      if (n > 1024) throw DataError("model file: implausible DBN count");
      for (std::uint32_t k = 0; k < n; ++k) {
        DbnModel d;
        d.patch_size = body.i32();
        const auto layers = body.u32();
        if (layers > 1024) throw DataError("model file: implausible layer count");
        for (std::uint32_t q = 0; q < layers; ++q) d.layers.push_back(read_rbm(body));
        d.top = read_rbm(body);
        try {
          d.validate();
        } catch (const std::invalid_argument& e) {
          throw DataError(std::string("model file: ") + e.what());
        }
        m.dbns.push_back(std::move(d));
      }
    } else if (tag == "WGHT") {
      m.weights.unary = body.f64s();
      m.weights.pairwise = body.f64s();
    }
    // Unknown sections are skipped.
  }
  for (const char* need : {"CONF", "PRIO", "GMM ", "DBN ", "WGHT"}) {
    if (!seen.count(need)) throw DataError(std::string("model file: missing section ") + need);
  }
  if (m.prior.prob.size() != m.prior.lattice.size() || m.prior.lattice.width != m.config.roi_size ||
      m.prior.lattice.height != m.config.roi_size) {
    throw DataError("model file: prior does not match the configured ROI size");
  }
  if (m.weights.unary.size() != m.config.unaries.size() ||
      m.weights.pairwise.size() != m.config.pairwise.size()) {
    throw DataError("model file: weight vector does not match the configured potentials");
  }
  for (int s : m.config.patch_sizes()) {
    try {
      (void)m.dbn_for(s);
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("model file: ") + e.what());
    }
  }
  return m;
}

void save_model(const fs::path& path, const TrainedModel& model) { write_file(path, encode_model(model)); }

TrainedModel load_model(const fs::path& path) {
  try {
    return decode_model(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

std::string format_report_text(const EvalReport& report) {
  std::string out = "# massseg evaluation report\n";
  out += "fingerprint\t" + report.fingerprint + "\n";
  out += "images\t" + std::to_string(report.ids.size()) + "\n";
  for (std::size_t i = 0; i < report.ids.size(); ++i) {
    out += "dice\t" + report.ids[i] + "\t" + fmt(report.dice[i]) + "\n";
  }
  out += "mean_dice\t" + fmt(report.mean_dice) + "\n";
  return out;
}

std::string format_report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["fingerprint"] = report.fingerprint;
  j["images"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.ids.size(); ++i) {
    j["images"].push_back({{"id", report.ids[i]}, {"dice", report.dice[i]}});
  }
  j["mean_dice"] = report.mean_dice;
  return j.dump(2) + "\n";
}

std::string format_timing(const EvalReport& report) {
  std::string out = "# wall-clock segmentation seconds per image\n";
  for (std::size_t i = 0; i < report.ids.size(); ++i) {
    out += "seconds\t" + report.ids[i] + "\t" + fmt(report.seconds[i]) + "\n";
  }
  out += "mean_seconds\t" + fmt(report.mean_seconds) + "\n";
  return out;
}

void write_report(const fs::path& path, const EvalReport& report) {
  write_file(path, format_report_text(report));
  write_file(fs::path(path.string() + ".json"), format_report_json(report));
  write_file(fs::path(path.string() + ".timing.tsv"), format_timing(report));
}

}  // namespace massseg
