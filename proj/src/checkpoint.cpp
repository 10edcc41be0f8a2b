#include "dnoc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dnoc/config.hpp"

namespace dnoc {

namespace {

constexpr char kMagic[8] = {'D', 'N', 'O', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) fail("truncated file");
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 26)) fail("implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) fail("truncated file");
    return s;
  }

  [[noreturn]] void fail(const std::string& what) const { throw CheckpointError("checkpoint", path_ + ": " + what); }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, std::map<std::string, std::string> metadata) {
  metadata["addressing"] = to_string(model.options.addressing);
  metadata["key_projection"] = model.options.key_projection ? "true" : "false";
  metadata["cell_from_image"] = model.options.cell_from_image ? "true" : "false";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint", "cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, 9);
  for_each_param(
      [&out](const char* name, const auto& p) {
        put_string(out, name);
        put<std::uint64_t>(out, static_cast<std::uint64_t>(p.rows()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(p.cols()));
        for (Eigen::Index r = 0; r < p.rows(); ++r)
          for (Eigen::Index c = 0; c < p.cols(); ++c) put<double>(out, p(r, c));
      },
      model);
  if (!out) throw IoError("checkpoint", "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint", "cannot open " + path);
  Reader rd(in, path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) rd.fail("not a checkpoint file");
  if (rd.get<std::uint32_t>() != kVersion) rd.fail("unsupported version");

  Checkpoint ck;
  const auto n_meta = rd.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = rd.get_string();
    ck.metadata[k] = rd.get_string();
  }
  std::map<std::string, MatrixXd> groups;
  const auto n_groups = rd.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_groups; ++i) {
    const auto name = rd.get_string();
    const auto rows = rd.get<std::uint64_t>();
    const auto cols = rd.get<std::uint64_t>();
    if (rows > (1u << 20) || cols > (1u << 20) || rows * cols > (1ull << 28)) rd.fail("implausible shape for " + name);
    MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rd.get<double>();
    if (!m.allFinite()) rd.fail("non-finite values in " + name);
    groups[name] = std::move(m);
  }
  for (const char* name : {"embed", "lstm.weights", "lstm.bias", "out.weights", "out.bias", "image.weights",
                           "image.bias", "query.weights", "key.weights"}) {
    if (groups.count(name) == 0) rd.fail(std::string("missing parameter group ") + name);
  }

  ModelOptions opts;
  try {
    if (ck.metadata.count("addressing")) opts.addressing = parse_addressing(ck.metadata["addressing"]);
  } catch (const Error&) {
    rd.fail("unknown addressing '" + ck.metadata["addressing"] + "'");
  }
  opts.key_projection = groups["key.weights"].size() != 0;
  opts.cell_from_image = ck.metadata["cell_from_image"] == "true";

  ModelDims d;
  d.embed = static_cast<int>(groups["embed"].rows());
  d.vocab = static_cast<int>(groups["embed"].cols());
  d.hidden = static_cast<int>(groups["lstm.bias"].size() / 4);
  d.image = static_cast<int>(groups["image.weights"].cols());
  d.feature = static_cast<int>(groups["query.weights"].rows());
  ck.model = Model::zeros(d, opts);
  for_each_param(
      [&](const char* name, auto& p) {
        const auto& g = groups[name];
        if (g.rows() * g.cols() != p.size() || (p.cols() != 1 && (g.rows() != p.rows() || g.cols() != p.cols()))) {
          rd.fail(std::string("inconsistent shape for ") + name + ": " + shape_string(g) + " against " +
                  shape_string(p));
        }
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = g.data()[i];
      },
      ck.model);
  return ck;
}

}  // namespace dnoc
