#include "gcmc/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gcmc/error.hpp"

namespace gcmc {
namespace {

constexpr std::array<char, 4> kMagic{'G', 'C', 'M', 'C'};
// Largest header or tensor we are willing to allocate for from an untrusted file.
constexpr std::uint64_t kMaxHeaderBytes = std::uint64_t{1} << 30;

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t k = 0; k < sizeof(T); ++k) bytes[k] = static_cast<unsigned char>(v >> (8 * k));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw CheckpointError(path.string() + ": truncated file");
  }
  T v = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(bytes[k]) << (8 * k);
  return v;
}

DenseMatrix column(std::size_t n, auto&& value_at) {
  DenseMatrix m(n, 1);
  for (std::size_t k = 0; k < n; ++k) m(k, 0) = static_cast<double>(value_at(k));
  return m;
}

}  // namespace

const DenseMatrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const DenseMatrix& Checkpoint::tensor(const std::string& name) const {
  const DenseMatrix* t = find(name);
  if (!t) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  return *t;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ostringstream header;
  header << "fingerprint " << ckpt.fingerprint << '\n';
  for (const auto& [k, v] : ckpt.hyper) header << "hyper " << k << ' ' << v << '\n';
  for (const auto& [name, t] : ckpt.tensors) {
    header << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  }
  const std::string text = header.str();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic bytes)");
  }
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(in, path);
  if (header_len > kMaxHeaderBytes) throw CheckpointError(path.string() + ": implausible header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw CheckpointError(path.string() + ": truncated header");
  }

  Checkpoint ckpt;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto space = line.find(' ');
    const std::string tag = line.substr(0, space);
    const std::string rest = space == std::string::npos ? "" : line.substr(space + 1);
    if (tag == "fingerprint") {
      ckpt.fingerprint = rest;
    } else if (tag == "hyper") {
      const auto sep = rest.find(' ');
      if (sep == std::string::npos) throw CheckpointError(path.string() + ": bad header line '" + line + "'");
      ckpt.hyper.emplace_back(rest.substr(0, sep), rest.substr(sep + 1));
    } else if (tag == "tensor") {
      std::istringstream fields(rest);
      std::string name;
      std::uint64_t rows = 0;
      std::uint64_t cols = 0;
      if (!(fields >> name >> rows >> cols) || (cols != 0 && rows > kMaxHeaderBytes / cols)) {
        throw CheckpointError(path.string() + ": bad header line '" + line + "'");
      }
      ckpt.tensors.emplace_back(name, DenseMatrix());
      shapes.emplace_back(rows, cols);
    } else {
      throw CheckpointError(path.string() + ": bad header line '" + line + "'");
    }
  }
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto [rows, cols] = shapes[k];
    std::vector<double> values(rows * cols);
    for (double& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in, path));
    ckpt.tensors[k].second = DenseMatrix(rows, cols, std::move(values));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError(path.string() + ": trailing bytes after the last tensor");
  }
  return ckpt;
}

Checkpoint make_checkpoint(const RunConfig& config, const RatingDataset& ds,
                           const GcmcModel& model, const ModelParams& params) {
  Checkpoint c;
  c.fingerprint = config.fingerprint();
  c.hyper = config.resolved();
  const auto levels = model.level_values();
  c.tensors.emplace_back("data.level_values",
                         column(levels.size(), [&](std::size_t k) { return levels[k]; }));
  c.tensors.emplace_back("data.user_ids",
                         column(ds.user_ids.size(), [&](std::size_t k) { return ds.user_ids[k]; }));
  c.tensors.emplace_back("data.item_ids",
                         column(ds.item_ids.size(), [&](std::size_t k) { return ds.item_ids[k]; }));
  const auto edges = model.graph().edges();
  DenseMatrix e(edges.size(), 3);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    e(k, 0) = static_cast<double>(edges[k].user);
    e(k, 1) = static_cast<double>(edges[k].item);
    e(k, 2) = static_cast<double>(edges[k].level);
  }
  c.tensors.emplace_back("data.edges", std::move(e));
  if (const FeatureSet* side = model.side_features()) {
    c.tensors.emplace_back("data.side.user", side->dense(Side::kUser));
    c.tensors.emplace_back("data.side.item", side->dense(Side::kItem));
  }
  for (const auto& [name, t] : params.named()) c.tensors.emplace_back(name, *t);
  return c;
}

RestoredModel restore_model(const Checkpoint& ckpt) {
  RunConfig config;
  try {
    for (const auto& [k, v] : ckpt.hyper) config.set(k, v);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint hyperparameters: ") + e.what());
  }

  const DenseMatrix& levels = ckpt.tensor("data.level_values");
  const DenseMatrix& users = ckpt.tensor("data.user_ids");
  const DenseMatrix& items = ckpt.tensor("data.item_ids");
  const DenseMatrix& edges = ckpt.tensor("data.edges");
  if (levels.cols() != 1 || users.cols() != 1 || items.cols() != 1 || edges.cols() != 3) {
    throw CheckpointError("checkpoint data tensors have unexpected shapes");
  }

  RatingDataset ds;
  ds.num_users = users.rows();
  ds.num_items = items.rows();
  for (std::size_t k = 0; k < levels.rows(); ++k) ds.level_values.push_back(levels(k, 0));
  for (std::size_t k = 0; k < users.rows(); ++k) ds.user_ids.push_back(static_cast<std::int64_t>(users(k, 0)));
  for (std::size_t k = 0; k < items.rows(); ++k) ds.item_ids.push_back(static_cast<std::int64_t>(items(k, 0)));
  for (std::size_t k = 0; k < edges.rows(); ++k) {
    const double u = edges(k, 0), i = edges(k, 1), l = edges(k, 2);
    if (!(u >= 0 && u < static_cast<double>(ds.num_users) && i >= 0 &&
          i < static_cast<double>(ds.num_items) && l >= 0 && l < static_cast<double>(levels.rows()))) {
      throw CheckpointError("checkpoint edge " + std::to_string(k) + " is out of range");
    }
    ds.triples.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i),
                          static_cast<std::uint32_t>(l)});
  }
  std::vector<std::size_t> all(ds.triples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  try {
    const TrainConfig tc = config.train_config(ds.num_levels());
    std::optional<FeatureSet> side;
    if (tc.model.encoder.side_info) {
      side = FeatureSet::side_info(ckpt.tensor("data.side.user"), ckpt.tensor("data.side.item"));
    }
    GcmcModel model(tc.model, build_rating_graph(ds, all), identity_features(ds), std::move(side),
                    ds.level_values);
    Rng scratch(0);
    ModelParams params = model.init_params(scratch);
    for (auto& [name, t] : params.named()) {
      const DenseMatrix& stored = ckpt.tensor(name);
      if (!stored.same_shape(*t)) throw CheckpointError("checkpoint tensor '" + name + "' has the wrong shape");
      *t = stored;
    }
    return RestoredModel{std::move(config), std::move(model), std::move(params), std::move(ds.user_ids),
                         std::move(ds.item_ids)};
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

}  // namespace gcmc
