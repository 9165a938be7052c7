#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gcmc/config.hpp"
#include "gcmc/model.hpp"

namespace gcmc {

/// On-disk layout:
///   "GCMC"                      4 bytes
///   version                     uint32 little-endian (currently 1)
///   header length               uint64 little-endian
///   header                      UTF-8 text, one entry per line:
///                                 fingerprint <hex>
///                                 hyper <key> <value>
///                                 tensor <name> <rows> <cols>
///   payloads                    rows*cols float64 little-endian per tensor,
///                               in header order, row-major
struct Checkpoint {
  std::string fingerprint;
  std::vector<std::pair<std::string, std::string>> hyper;
  std::vector<std::pair<std::string, DenseMatrix>> tensors;

  const DenseMatrix& tensor(const std::string& name) const;
  const DenseMatrix* find(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws CheckpointError for unreadable, truncated or malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Packs parameters plus everything predict needs without the data files:
/// the training edges, id maps, rating values and side features.
Checkpoint make_checkpoint(const RunConfig& config, const RatingDataset& ds,
                           const GcmcModel& model, const ModelParams& params);

struct RestoredModel {
  RunConfig config;
  GcmcModel model;
  ModelParams params;
  std::vector<std::int64_t> user_ids;  // dense index -> original id
  std::vector<std::int64_t> item_ids;
};

/// Inverse of make_checkpoint. Throws CheckpointError on inconsistent content.
RestoredModel restore_model(const Checkpoint& ckpt);

}  // namespace gcmc
