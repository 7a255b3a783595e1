#pragma once

// File formats: binary PGM images, TSV dataset manifests, the binary model
// file and evaluation reports.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "massseg/eval.hpp"
#include "massseg/model.hpp"
#include "massseg/preprocess.hpp"

namespace massseg {

/// Unreadable, unwritable or malformed input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- PGM (P5). 16-bit samples are big-endian. ------------------------------

RawImage read_pgm(const std::filesystem::path& path);
RawImage parse_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const RawImage& img);
std::string encode_pgm(const RawImage& img);

/// 8-bit mask image with 255 for mass and 0 for background.
RawImage mask_to_image(const LabelMask& mask);
/// Nonzero samples become +1.
LabelMask image_to_mask(const RawImage& img);

// --- Manifest ---------------------------------------------------------------

enum class Split { train, test };

struct ManifestRecord {
  std::filesystem::path image;
  std::filesystem::path mask;
  RoiAnnotation annotation;
  Split split = Split::train;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> split(Split s) const;
};

/// Tab-separated: image, mask, center_x, center_y, scale, split. Blank lines
/// and lines starting with '#' are skipped. Relative paths resolve against
/// the manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& path, bool check_files = true);
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);
std::string format_manifest(const DatasetManifest& manifest);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// --- Model file ---------------------------------------------------------------

inline constexpr char kModelMagic[8] = {'M', 'S', 'S', 'G', 'M', 'O', 'D', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string encode_model(const TrainedModel& model);
TrainedModel decode_model(const std::string& bytes);
void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

// --- Reports ----------------------------------------------------------------

/// Line-oriented report: one "dice" line per image, then the mean.
std::string format_report_text(const EvalReport& report);
/// Structured report (JSON) with the same content as the text report.
std::string format_report_json(const EvalReport& report);
/// Wall-clock timings, kept apart from the accuracy report.
std::string format_timing(const EvalReport& report);

/// Writes <path> (text), <path>.json and <path>.timing.tsv.
void write_report(const std::filesystem::path& path, const EvalReport& report);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace massseg
