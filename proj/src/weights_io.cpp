#include "nis/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace nis {

namespace {

constexpr char kMagic[4] = {'N', 'I', 'S', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxDim = 1u << 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("weight file truncated while reading " + std::string(what) + ": need " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_) + ", have " +
                        std::to_string(bytes_.size() - pos_));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void put_layer(std::string& out, const ConvLayer& l) {
  put_u32(out, static_cast<std::uint32_t>(l.c_out));
  put_u32(out, static_cast<std::uint32_t>(l.c_in));
  put_u32(out, static_cast<std::uint32_t>(l.f));
  for (const Complex& w : l.weights) {
    put_f64(out, w.real());
    put_f64(out, w.imag());
  }
  for (const Complex& b : l.biases) {
    put_f64(out, b.real());
    put_f64(out, b.imag());
  }
}

ConvLayer get_layer(Reader& in, std::size_t module, int index) {
  const std::string where = "module " + std::to_string(module) + " layer " + std::to_string(index);
  const std::uint32_t c_out = in.u32("layer shape");
  const std::uint32_t c_in = in.u32("layer shape");
  const std::uint32_t f = in.u32("layer shape");
  if (c_out == 0 || c_in == 0 || c_out > kMaxDim || c_in > kMaxDim || f == 0 || f % 2 == 0 || f > 255) {
    throw FormatError("weight file: invalid shape (" + std::to_string(c_out) + ", " + std::to_string(c_in) + ", " +
                      std::to_string(f) + ") for " + where);
  }
  ConvLayer layer(static_cast<int>(c_out), static_cast<int>(c_in), static_cast<int>(f));
  in.need((layer.weights.size() + layer.biases.size()) * 16, "layer parameters");
  for (Complex& w : layer.weights) {
    const double re = in.f64("weights");
    w = Complex(re, in.f64("weights"));
  }
  for (Complex& b : layer.biases) {
    const double re = in.f64("biases");
    b = Complex(re, in.f64("biases"));
  }
  return layer;
}

}  // namespace

std::string encode_weights(const CascadeModel& model) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(model.modules.size()));
  for (const auto& m : model.modules) {
    for (int l = 0; l < CnnModule::kLayers; ++l) put_layer(out, m.layer(l));
  }
  return out;
}

CascadeModel decode_weights(const std::string& bytes) {
  Reader in(bytes);
  in.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("weight file: bad magic (expected NISW)");
  in.skip(4);
  const std::uint32_t version = in.u32("version");
  if (version != kVersion) throw FormatError("weight file: unsupported version " + std::to_string(version));
  const std::uint32_t count = in.u32("module count");
  if (count == 0 || count > 1024) throw FormatError("weight file: invalid module count " + std::to_string(count));

  CascadeModel model;
  for (std::size_t k = 0; k < count; ++k) {
    CnnModule m;
    m.conv1 = get_layer(in, k, 0);
    m.conv2 = get_layer(in, k, 1);
    m.conv3 = get_layer(in, k, 2);
    if (m.conv1.c_in != 1 || m.conv2.c_in != m.conv1.c_out || m.conv3.c_in != m.conv2.c_out || m.conv3.c_out != 1) {
      throw FormatError("weight file: module " + std::to_string(k) + " layer shapes do not chain");
    }
    m.spec.f1 = m.conv1.f;
    m.spec.n1 = m.conv1.c_out;
    m.spec.f2 = m.conv2.f;
    m.spec.n2 = m.conv2.c_out;
    m.spec.f3 = m.conv3.f;
    model.modules.push_back(std::move(m));
  }
  if (in.remaining() != 0) {
    throw FormatError("weight file: " + std::to_string(in.remaining()) + " trailing bytes at offset " +
                      std::to_string(in.pos()));
  }
  return model;
}

void save_weights(const CascadeModel& model, const std::string& path) {
  const std::string bytes = encode_weights(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

CascadeModel load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_weights(bytes);
}

}  // namespace nis
