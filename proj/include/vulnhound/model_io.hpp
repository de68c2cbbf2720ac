#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "vulnhound/dataset.hpp"
#include "vulnhound/error.hpp"
#include "vulnhound/rnn.hpp"

// Model container, little-endian:
//   "VLSM" | version u32 = 1 | dim u32 | hidden u32 | threshold f64
//   | W_i U_i b_i W_f U_f b_f W_o U_o b_o W_g U_g b_g w b   (row-major f64)
//   | "META" | length u32 | UTF-8 JSON metadata
namespace vulnhound::model_io {

inline constexpr std::uint32_t kVersion = 1;

struct Metadata {
  dataset::WindowSpec window;
  std::string provider = "skipgram";  // "skipgram" | "external"
  std::string table_sha256;           // embedding table the model was trained with; skipgram only
  std::string config_json = "{}";     // snapshot of the run configuration

  bool operator==(const Metadata&) const = default;
};

struct Model {
  rnn::LstmParams<double> params;
  double threshold = 0.5;
  Metadata meta;
};

class ModelFormatError : public DataError {
 public:
  using DataError::DataError;
};

std::string encode(const Model& model);
Model decode(std::string_view bytes);

void save(const Model& model, const std::filesystem::path& path);
Model load(const std::filesystem::path& path);

// Content hash of the model file, used as its id in reports.
std::string model_id(const std::filesystem::path& path);

}  // namespace vulnhound::model_io
