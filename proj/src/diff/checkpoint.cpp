#include "voicesep/diff/checkpoint.h"

#include <bit>
#include <cstring>

#include "voicesep/errors.h"
#include "voicesep/score_io.h"

namespace voicesep::diff {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    out_.append(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void put_bytes(const std::string& s) { out_.append(s); }
  void put_matrix_values(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) put(static_cast<double>(m.data()[i]));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix get_matrix(std::uint64_t rows, std::uint64_t cols) {
    if (cols != 0 && rows > (in_.size() / sizeof(double)) / cols) throw CheckpointError("checkpoint tensor too large");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(get<double>());
    return m;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::string& metadata, const ParameterSet& params, const AdamW* optimizer) {
  Writer w;
  w.put_bytes("VSCK");
  w.put(kVersion);
  w.put(static_cast<std::uint64_t>(metadata.size()));
  w.put_bytes(metadata);
  w.put(static_cast<std::uint64_t>(params.size()));
  for (const auto& p : params) {
    w.put(static_cast<std::uint32_t>(p->name.size()));
    w.put_bytes(p->name);
    w.put(static_cast<std::uint64_t>(p->value.rows()));
    w.put(static_cast<std::uint64_t>(p->value.cols()));
    w.put_matrix_values(p->value);
  }
  const bool has_opt = optimizer != nullptr && optimizer->initialized();
  w.put(static_cast<std::uint8_t>(has_opt ? 1 : 0));
  if (has_opt) {
    w.put(optimizer->step_count());
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.put_matrix_values(optimizer->first_moments().at(i));
      w.put_matrix_values(optimizer->second_moments().at(i));
    }
  }
  return w.take();
}

CheckpointData decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.get_bytes(4) != "VSCK") throw CheckpointError("not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

  CheckpointData data;
  data.metadata = r.get_bytes(r.get<std::uint64_t>());
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.get_bytes(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    t.value = r.get_matrix(rows, cols);
    data.tensors.push_back(std::move(t));
  }
  data.has_optimizer = r.get<std::uint8_t>() != 0;
  if (data.has_optimizer) {
    data.optimizer_step = r.get<std::uint64_t>();
    for (const auto& t : data.tensors) {
      data.first_moments.push_back(r.get_matrix(static_cast<std::uint64_t>(t.value.rows()),
                                                static_cast<std::uint64_t>(t.value.cols())));
      data.second_moments.push_back(r.get_matrix(static_cast<std::uint64_t>(t.value.rows()),
                                                 static_cast<std::uint64_t>(t.value.cols())));
    }
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return data;
}

void restore_checkpoint(const CheckpointData& data, ParameterSet& params, AdamW* optimizer) {
  if (data.tensors.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(data.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = data.tensors[i];
    Parameter& p = params[i];
    if (t.name != p.name) throw CheckpointError("tensor " + std::to_string(i) + " is '" + t.name + "', expected '" + p.name + "'");
    if (t.value.rows() != p.value.rows() || t.value.cols() != p.value.cols()) {
      throw CheckpointError("shape mismatch for '" + p.name + "'");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = data.tensors[i].value;
  if (optimizer != nullptr && data.has_optimizer) {
    optimizer->restore(data.optimizer_step, data.first_moments, data.second_moments);
  }
}

void save_checkpoint(const std::filesystem::path& path, const std::string& metadata, const ParameterSet& params,
                     const AdamW* optimizer) {
  write_file_atomic(path, encode_checkpoint(metadata, params, optimizer));
}

CheckpointData load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace voicesep::diff
