#include "geofield/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace geofield {

namespace {

constexpr char kMagic[4] = {'G', 'Z', 'T', 'N'};
constexpr uint8_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 1;
constexpr int kMaxDims = 8;
constexpr uint64_t kMaxElements = uint64_t(1) << 32;

void put_u64_le(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32_le(std::ostream& out, float v) {
  const uint32_t bits = std::bit_cast<uint32_t>(v);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint64_t get_u64_le(const unsigned char* b) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

float get_f32_le(const unsigned char* b) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return std::bit_cast<float>(v);
}

[[noreturn]] void fail(TensorIoError::Code code, const std::string& msg) {
  throw TensorIoError(code, msg);
}

void read_exact(std::istream& in, void* dst, size_t bytes, const std::string& context,
                const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
  if (static_cast<size_t>(in.gcount()) != bytes)
    fail(TensorIoError::Code::Truncated,
         context + ": truncated while reading " + what + " (wanted " + std::to_string(bytes) +
             " bytes, got " + std::to_string(in.gcount()) + ")");
}

}  // namespace

uint64_t Tensor::element_count() const {
  uint64_t n = 1;
  for (uint64_t d : dims) n *= d;
  return n;
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
  Tensor t;
  t.dims = {static_cast<uint64_t>(m.rows()), static_cast<uint64_t>(m.cols())};
  t.data.resize(static_cast<size_t>(m.rows() * m.cols()));
  size_t at = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data[at++] = static_cast<float>(m(i, j));
  return t;
}

Tensor Tensor::from_vector(const Eigen::VectorXd& v) {
  Tensor t;
  t.dims = {static_cast<uint64_t>(v.size())};
  t.data.resize(static_cast<size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data[static_cast<size_t>(i)] =
      static_cast<float>(v[i]);
  return t;
}

Eigen::MatrixXd Tensor::to_matrix() const {
  if (dims.size() != 2)
    throw std::invalid_argument("tensor: expected 2 dims, found " + std::to_string(dims.size()));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  size_t at = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<double>(data[at++]);
  return m;
}

Eigen::VectorXd Tensor::to_vector() const {
  if (dims.size() != 1)
    throw std::invalid_argument("tensor: expected 1 dim, found " + std::to_string(dims.size()));
  Eigen::VectorXd v(static_cast<Eigen::Index>(dims[0]));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] =
      static_cast<double>(data[static_cast<size_t>(i)]);
  return v;
}

void write_tensor_record(std::ostream& out, const Tensor& tensor) {
  if (tensor.dims.size() > kMaxDims)
    fail(TensorIoError::Code::BadHeader, "tensor has too many dims");
  if (tensor.element_count() != tensor.data.size())
    fail(TensorIoError::Code::BadHeader, "tensor payload does not match its dims");
  out.write(kMagic, 4);
  out.put(static_cast<char>(kVersion));
  out.put(static_cast<char>(kDtypeF32));
  out.put(static_cast<char>(tensor.dims.size()));
  for (uint64_t d : tensor.dims) put_u64_le(out, d);
  for (float f : tensor.data) put_f32_le(out, f);
  if (!out) fail(TensorIoError::Code::Io, "tensor write failed");
}

Tensor read_tensor_record(std::istream& in, const std::string& context) {
  char magic[4];
  read_exact(in, magic, 4, context, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    fail(TensorIoError::Code::BadMagic, context + ": bad magic, not a tensor file");

  unsigned char meta[3];
  read_exact(in, meta, 3, context, "header");
  if (meta[0] != kVersion)
    fail(TensorIoError::Code::BadVersion,
         context + ": unsupported version " + std::to_string(meta[0]));
  if (meta[1] != kDtypeF32)
    fail(TensorIoError::Code::BadDtype,
         context + ": unsupported dtype code " + std::to_string(meta[1]));
  const int ndim = meta[2];
  if (ndim > kMaxDims)
    fail(TensorIoError::Code::BadHeader, context + ": too many dims (" + std::to_string(ndim) + ")");

  Tensor t;
  t.dims.resize(static_cast<size_t>(ndim));
  uint64_t count = 1;
  for (int i = 0; i < ndim; ++i) {
    unsigned char raw[8];
    read_exact(in, raw, 8, context, "dims");
    t.dims[static_cast<size_t>(i)] = get_u64_le(raw);
    if (t.dims[static_cast<size_t>(i)] == 0 || t.dims[static_cast<size_t>(i)] > kMaxElements ||
        count > kMaxElements / std::max<uint64_t>(t.dims[static_cast<size_t>(i)], 1))
      fail(TensorIoError::Code::BadHeader, context + ": implausible dimension sizes");
    count *= t.dims[static_cast<size_t>(i)];
  }

  t.data.resize(static_cast<size_t>(count));
  std::vector<unsigned char> raw(static_cast<size_t>(count) * 4);
  read_exact(in, raw.data(), raw.size(), context, "payload");
  for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = get_f32_le(raw.data() + 4 * i);
  return t;
}

Tensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(TensorIoError::Code::Io, path + ": cannot open for reading");
  Tensor t = read_tensor_record(in, path);
  in.peek();
  if (!in.eof()) fail(TensorIoError::Code::TrailingData, path + ": trailing bytes after tensor");
  return t;
}

void write_tensor(const std::string& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(TensorIoError::Code::Io, path + ": cannot open for writing");
  write_tensor_record(out, tensor);
  out.close();
  if (!out) fail(TensorIoError::Code::Io, path + ": write failed");
}

void write_anchor_bank(const std::string& path, const AnchorSet& anchors) {
  if (anchors.count() < 1) throw std::invalid_argument("anchor bank: nothing to write");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(TensorIoError::Code::Io, path + ": cannot open for writing");
  write_tensor_record(out, Tensor::from_matrix(anchors.visual));
  write_tensor_record(out, Tensor::from_matrix(anchors.geometric));
  write_tensor_record(out, Tensor::from_vector(anchors.density));
  out.close();
  if (!out) fail(TensorIoError::Code::Io, path + ": write failed");
}

AnchorSet read_anchor_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(TensorIoError::Code::Io, path + ": cannot open for reading");
  AnchorSet set;
  set.visual = read_tensor_record(in, path + " (visual)").to_matrix();
  set.geometric = read_tensor_record(in, path + " (geometric)").to_matrix();
  set.density = read_tensor_record(in, path + " (density)").to_vector();
  in.peek();
  if (!in.eof()) fail(TensorIoError::Code::TrailingData, path + ": trailing bytes after bank");
  if (set.geometric.rows() != set.visual.rows() || set.density.size() != set.visual.rows())
    throw std::invalid_argument(path + ": anchor bank records disagree on the anchor count");
  if (!set.density.allFinite() || (set.density.array() < 0.0).any())
    throw std::invalid_argument(path + ": anchor bank densities must be finite and >= 0");
  return set;
}

// ---------------------------------------------------------------------------
// PLY subset

namespace {

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

struct PlyProperty {
  PlyType type = PlyType::F32;
  std::string name;
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> props;
  bool has_list = false;
};

size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::I8:
    case PlyType::U8: return 1;
    case PlyType::I16:
    case PlyType::U16: return 2;
    case PlyType::I32:
    case PlyType::U32: return 4;
    case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

bool is_integer(PlyType t) { return t != PlyType::F32 && t != PlyType::F64; }

PlyType parse_type(const std::string& word, const std::string& path) {
  if (word == "char" || word == "int8") return PlyType::I8;
  if (word == "uchar" || word == "uint8") return PlyType::U8;
  if (word == "short" || word == "int16") return PlyType::I16;
  if (word == "ushort" || word == "uint16") return PlyType::U16;
  if (word == "int" || word == "int32") return PlyType::I32;
  if (word == "uint" || word == "uint32") return PlyType::U32;
  if (word == "float" || word == "float32") return PlyType::F32;
  if (word == "double" || word == "float64") return PlyType::F64;
  throw std::runtime_error(path + ": unknown property type '" + word + "'");
}

long read_binary_int(const unsigned char* at, PlyType t) {
  switch (t) {
    case PlyType::I8: return static_cast<int8_t>(at[0]);
    case PlyType::U8: return at[0];
    case PlyType::I16: return static_cast<int16_t>(at[0] | (at[1] << 8));
    case PlyType::U16: return static_cast<uint16_t>(at[0] | (at[1] << 8));
    case PlyType::I32:
    case PlyType::U32: {
      uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(at[i]) << (8 * i);
      return t == PlyType::I32 ? static_cast<int32_t>(v) : static_cast<long>(v);
    }
    default: return 0;
  }
}

}  // namespace

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  // Header: text lines up to and including "end_header".
  size_t pos = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= buf.size()) throw std::runtime_error(path + ": malformed header, file ended early");
    const size_t nl = buf.find('\n', pos);
    std::string line = buf.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? buf.size() : nl + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") throw std::runtime_error(path + ": malformed header, missing 'ply'");

  bool binary = false;
  bool saw_format = false;
  std::vector<PlyElement> elements;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word.empty() || word == "comment" || word == "obj_info") continue;
    if (word == "end_header") break;
    if (word == "format") {
      std::string kind, version;
      ls >> kind >> version;
      if (kind == "ascii") binary = false;
      else if (kind == "binary_little_endian") binary = true;
      else if (kind == "binary_big_endian")
        throw std::runtime_error(path + ": unsupported feature: big-endian payload");
      else throw std::runtime_error(path + ": malformed header, unknown format '" + kind + "'");
      if (version != "1.0")
        throw std::runtime_error(path + ": unsupported feature: format version " + version);
      saw_format = true;
    } else if (word == "element") {
      PlyElement el;
      if (!(ls >> el.name >> el.count) || el.count < 0)
        throw std::runtime_error(path + ": malformed element line '" + line + "'");
      elements.push_back(std::move(el));
    } else if (word == "property") {
      if (elements.empty())
        throw std::runtime_error(path + ": malformed header, property before any element");
      std::string t;
      ls >> t;
      if (t == "list") {
        elements.back().has_list = true;
        continue;
      }
      PlyProperty prop;
      prop.type = parse_type(t, path);
      if (!(ls >> prop.name))
        throw std::runtime_error(path + ": malformed property line '" + line + "'");
      elements.back().props.push_back(std::move(prop));
    } else {
      throw std::runtime_error(path + ": malformed header, unknown keyword '" + word + "'");
    }
  }
  if (!saw_format) throw std::runtime_error(path + ": malformed header, missing format line");

  // Locate the vertex element and its x/y/z (+ optional label) columns.
  size_t vertex_at = elements.size();
  for (size_t e = 0; e < elements.size(); ++e)
    if (elements[e].name == "vertex") {
      vertex_at = e;
      break;
    }
  if (vertex_at == elements.size())
    throw std::runtime_error(path + ": malformed header, no vertex element");
  const PlyElement& vertex = elements[vertex_at];
  if (vertex.has_list)
    throw std::runtime_error(path + ": unsupported feature: list property on vertices");
  if (vertex.count < 1) throw std::runtime_error(path + ": vertex element is empty");

  int cx = -1, cy = -1, cz = -1, clabel = -1;
  for (size_t p = 0; p < vertex.props.size(); ++p) {
    const PlyProperty& prop = vertex.props[p];
    auto coord = [&](int& slot) {
      if (prop.type != PlyType::F32)
        throw std::runtime_error(path + ": unsupported feature: coordinate '" + prop.name +
                                 "' is not float32");
      slot = static_cast<int>(p);
    };
    if (prop.name == "x") coord(cx);
    else if (prop.name == "y") coord(cy);
    else if (prop.name == "z") coord(cz);
    else if (prop.name == "label") {
      if (!is_integer(prop.type))
        throw std::runtime_error(path + ": unsupported feature: label is not an integer type");
      clabel = static_cast<int>(p);
    }
  }
  if (cx < 0 || cy < 0 || cz < 0)
    throw std::runtime_error(path + ": malformed header, vertex needs float x, y, z");

  PointCloud cloud;
  cloud.coords.resize(vertex.count, 3);
  Eigen::VectorXi labels(clabel >= 0 ? vertex.count : 0);

  if (binary) {
    // Skip any fixed-size elements that precede the vertices.
    for (size_t e = 0; e < vertex_at; ++e) {
      if (elements[e].has_list)
        throw std::runtime_error(path +
                                 ": unsupported feature: list-typed element before vertices");
      size_t row = 0;
      for (const auto& prop : elements[e].props) row += type_size(prop.type);
      pos += row * static_cast<size_t>(elements[e].count);
    }
    size_t row_size = 0;
    std::vector<size_t> offsets(vertex.props.size());
    for (size_t p = 0; p < vertex.props.size(); ++p) {
      offsets[p] = row_size;
      row_size += type_size(vertex.props[p].type);
    }
    const size_t need = row_size * static_cast<size_t>(vertex.count);
    if (pos + need > buf.size())
      throw std::runtime_error(path + ": truncated payload (need " + std::to_string(need) +
                               " bytes at offset " + std::to_string(pos) + ", file has " +
                               std::to_string(buf.size() - pos) + ")");
    const unsigned char* base = reinterpret_cast<const unsigned char*>(buf.data()) + pos;
    for (long i = 0; i < vertex.count; ++i) {
      const unsigned char* row = base + static_cast<size_t>(i) * row_size;
      cloud.coords(i, 0) = get_f32_le(row + offsets[static_cast<size_t>(cx)]);
      cloud.coords(i, 1) = get_f32_le(row + offsets[static_cast<size_t>(cy)]);
      cloud.coords(i, 2) = get_f32_le(row + offsets[static_cast<size_t>(cz)]);
      if (clabel >= 0)
        labels[i] = static_cast<int>(read_binary_int(row + offsets[static_cast<size_t>(clabel)],
                                                     vertex.props[static_cast<size_t>(clabel)].type));
    }
  } else {
    std::istringstream data(buf.substr(pos));
    auto next_token = [&](const char* what) -> std::string {
      std::string tok;
      if (!(data >> tok))
        throw std::runtime_error(path + ": truncated payload while reading " + what);
      return tok;
    };
    for (size_t e = 0; e < vertex_at; ++e)
      for (long i = 0; i < elements[e].count; ++i)
        for (size_t p = 0; p < elements[e].props.size(); ++p) next_token("a skipped element");
    for (long i = 0; i < vertex.count; ++i) {
      for (size_t p = 0; p < vertex.props.size(); ++p) {
        const std::string tok = next_token("vertex data");
        try {
          // The declared type is float32, so the parse lands there first and
          // ascii agrees bit-for-bit with the binary encoding.
          if (static_cast<int>(p) == cx) cloud.coords(i, 0) = static_cast<float>(std::stod(tok));
          else if (static_cast<int>(p) == cy) cloud.coords(i, 1) = static_cast<float>(std::stod(tok));
          else if (static_cast<int>(p) == cz) cloud.coords(i, 2) = static_cast<float>(std::stod(tok));
          else if (static_cast<int>(p) == clabel) labels[i] = std::stoi(tok);
        } catch (const std::exception&) {
          throw std::runtime_error(path + ": malformed vertex value '" + tok + "'");
        }
      }
    }
  }

  if (clabel >= 0) cloud.labels = std::move(labels);
  cloud.validate();
  return cloud;
}

void write_ply(const std::string& path, const PointCloud& cloud, bool binary) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");

  out << "ply\n"
      << "format " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.labels) out << "property int label\n";
  out << "end_header\n";

  if (binary) {
    for (int i = 0; i < cloud.size(); ++i) {
      for (int c = 0; c < 3; ++c) put_f32_le(out, static_cast<float>(cloud.coords(i, c)));
      if (cloud.labels) {
        const int32_t v = (*cloud.labels)[i];
        unsigned char b[4];
        for (int k = 0; k < 4; ++k)
          b[k] = static_cast<unsigned char>((static_cast<uint32_t>(v) >> (8 * k)) & 0xff);
        out.write(reinterpret_cast<const char*>(b), 4);
      }
    }
  } else {
    out.precision(9);  // float32 round trip
    for (int i = 0; i < cloud.size(); ++i) {
      out << static_cast<float>(cloud.coords(i, 0)) << ' '
          << static_cast<float>(cloud.coords(i, 1)) << ' '
          << static_cast<float>(cloud.coords(i, 2));
      if (cloud.labels) out << ' ' << (*cloud.labels)[i];
      out << '\n';
    }
  }
  out.close();
  if (!out) throw std::runtime_error(path + ": write failed");
}

// ---------------------------------------------------------------------------
// Label files and run configuration

std::vector<int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::vector<int> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t"));
    trimmed.erase(trimmed.find_last_not_of(" \t") + 1);
    if (trimmed.empty()) continue;
    size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(trimmed, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != trimmed.size())
      throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                               " is not an integer: '" + line + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::runtime_error(path + ": no labels found");
  return out;
}

void write_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  for (int v : labels) out << v << '\n';
  out.close();
  if (!out) throw std::runtime_error(path + ": write failed");
}

namespace {

int to_int(const std::string& key, const std::string& value) {
  size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size())
    throw std::runtime_error("config: key '" + key + "' needs an integer, got '" + value + "'");
  return v;
}

double to_double(const std::string& key, const std::string& value) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size())
    throw std::runtime_error("config: key '" + key + "' needs a number, got '" + value + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw std::runtime_error("config: key '" + key + "' needs 0/1/true/false, got '" + value + "'");
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text, const std::string& context) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = line;
    t.erase(0, t.find_first_not_of(" \t"));
    t.erase(t.find_last_not_of(" \t") + 1);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(context + ": line " + std::to_string(lineno) +
                               " is not key=value: '" + line + "'");
    std::string key = t.substr(0, eq);
    std::string value = t.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    if (key.empty())
      throw std::runtime_error(context + ": line " + std::to_string(lineno) + " has no key");
    pairs.emplace_back(std::move(key), std::move(value));
  }

  RunConfig cfg;
  // The preset seeds the defaults; explicit keys override it in file order.
  for (const auto& [key, value] : pairs)
    if (key == "preset") {
      apply_preset(value, cfg.pipeline, cfg.fpfh);
      cfg.preset = value;
    }

  for (const auto& [key, value] : pairs) {
    if (key == "preset") continue;
    if (key == "gamma_iters") cfg.pipeline.gamma_iters = to_int(key, value);
    else if (key == "n_super") cfg.pipeline.n_super = to_int(key, value);
    else if (key == "k1") cfg.pipeline.k1 = to_int(key, value);
    else if (key == "k2") cfg.pipeline.k2 = to_int(key, value);
    else if (key == "sh_iters") cfg.pipeline.sh_iters = to_int(key, value);
    else if (key == "ot_eps") cfg.pipeline.ot_eps = to_double(key, value);
    else if (key == "ot_iters") cfg.pipeline.ot_iters = to_int(key, value);
    else if (key == "ms_iters") cfg.pipeline.ms_iters = to_int(key, value);
    else if (key == "bandwidth_rank") cfg.pipeline.bandwidth_rank = to_int(key, value);
    else if (key == "agg_passes") cfg.pipeline.agg_passes = to_int(key, value);
    else if (key == "blend") cfg.pipeline.blend = to_double(key, value);
    else if (key == "fps_start") cfg.pipeline.fps_start = to_int(key, value);
    else if (key == "recompute_scales") cfg.pipeline.recompute_scales = to_bool(key, value);
    else if (key == "nms_both_spaces") cfg.pipeline.nms_both_spaces = to_bool(key, value);
    else if (key == "threads") cfg.pipeline.threads = to_int(key, value);
    else if (key == "coord_kernel") {
      if (value == "tanh") cfg.pipeline.coord_kernel = CoordKernel::Tanh;
      else if (value == "softmax") cfg.pipeline.coord_kernel = CoordKernel::Softmax;
      else
        throw std::runtime_error("config: coord_kernel must be tanh or softmax, got '" + value +
                                 "'");
    } else if (key == "mref") cfg.fpfh.m_ref = to_int(key, value);
    else if (key == "k3") cfg.fpfh.k3 = to_int(key, value);
    else if (key == "k4") cfg.fpfh.k4 = to_int(key, value);
    else if (key == "r1") cfg.fpfh.r1 = to_double(key, value);
    else if (key == "r2") cfg.fpfh.r2 = to_double(key, value);
    else throw std::runtime_error(context + ": unknown config key '" + key + "'");
  }

  cfg.pipeline.validate();
  cfg.fpfh.validate();
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str(), path);
}

}  // namespace geofield
