#include "icoreg/ply.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "icoreg/error.hpp"

namespace icoreg::pipeline {
namespace {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

enum class Scalar { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

std::optional<Scalar> parse_scalar(const std::string& name) {
  if (name == "char" || name == "int8") return Scalar::kInt8;
  if (name == "uchar" || name == "uint8") return Scalar::kUint8;
  if (name == "short" || name == "int16") return Scalar::kInt16;
  if (name == "ushort" || name == "uint16") return Scalar::kUint16;
  if (name == "int" || name == "int32") return Scalar::kInt32;
  if (name == "uint" || name == "uint32") return Scalar::kUint32;
  if (name == "float" || name == "float32") return Scalar::kFloat32;
  if (name == "double" || name == "float64") return Scalar::kFloat64;
  return std::nullopt;
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::kInt8:
    case Scalar::kUint8: return 1;
    case Scalar::kInt16:
    case Scalar::kUint16: return 2;
    case Scalar::kInt32:
    case Scalar::kUint32:
    case Scalar::kFloat32: return 4;
    case Scalar::kFloat64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::kFloat32;
  std::optional<Scalar> list_count;  // set for list properties
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

[[noreturn]] void malformed(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorKind::kFormat, path.string() + ": " + what);
}

template <typename T>
double load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return static_cast<double>(v);
}

double decode(Scalar s, const char* p) {
  switch (s) {
    case Scalar::kInt8: return load<std::int8_t>(p);
    case Scalar::kUint8: return load<std::uint8_t>(p);
    case Scalar::kInt16: return load<std::int16_t>(p);
    case Scalar::kUint16: return load<std::uint16_t>(p);
    case Scalar::kInt32: return load<std::int32_t>(p);
    case Scalar::kUint32: return load<std::uint32_t>(p);
    case Scalar::kFloat32: return load<float>(p);
    case Scalar::kFloat64: return load<double>(p);
  }
  return 0.0;
}

/// Byte cursor over the binary payload.
class Reader {
 public:
  Reader(const std::vector<char>& data, const std::filesystem::path& path) : data_(data), path_(path) {}
  double read(Scalar s) {
    const std::size_t n = scalar_size(s);
    if (pos_ + n > data_.size()) malformed(path_, "truncated binary payload");
    const double v = decode(s, data_.data() + pos_);
    pos_ += n;
    return v;
  }

 private:
  const std::vector<char>& data_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

std::size_t list_length(double v, const std::filesystem::path& path) {
  if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::size_t>(v))) malformed(path, "bad list length");
  return static_cast<std::size_t>(v);
}

}  // namespace

geom::PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") malformed(path, "missing ply magic");
  std::optional<PlyFormat> format;
  std::vector<Element> elements;
  bool ended = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "end_header") {
      ended = true;
      break;
    }
    if (keyword == "format") {
      std::string kind, version;
      ls >> kind >> version;
      if (kind == "ascii") format = PlyFormat::kAscii;
      else if (kind == "binary_little_endian") format = PlyFormat::kBinaryLittleEndian;
      else if (kind == "binary_big_endian") malformed(path, "big-endian PLY is not supported");
      else malformed(path, "unknown format '" + kind + "'");
    } else if (keyword == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) malformed(path, "bad element line '" + line + "'");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (elements.empty()) malformed(path, "property before any element");
      std::string type;
      ls >> type;
      Property p;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        const auto ct = parse_scalar(count_type), it = parse_scalar(item_type);
        if (!ct || !it || ct == Scalar::kFloat32 || ct == Scalar::kFloat64) malformed(path, "bad list property");
        p.list_count = *ct;
        p.type = *it;
      } else {
        const auto t = parse_scalar(type);
        if (!t) malformed(path, "unknown property type '" + type + "'");
        p.type = *t;
        ls >> p.name;
      }
      if (p.name.empty()) malformed(path, "unnamed property");
      elements.back().properties.push_back(std::move(p));
    } else {
      malformed(path, "unknown header line '" + line + "'");
    }
  }
  if (!ended) malformed(path, "header has no end_header");
  if (!format) malformed(path, "header has no format line");

  const Element* vertex = nullptr;
  std::array<int, 3> xyz = {-1, -1, -1};
  for (const auto& e : elements)
    if (e.name == "vertex") {
      vertex = &e;
      for (std::size_t i = 0; i < e.properties.size(); ++i) {
        const auto& p = e.properties[i];
        if (p.list_count) continue;
        if (p.name == "x") xyz[0] = static_cast<int>(i);
        if (p.name == "y") xyz[1] = static_cast<int>(i);
        if (p.name == "z") xyz[2] = static_cast<int>(i);
      }
    }
  if (!vertex) malformed(path, "no vertex element");
  for (int k : xyz)
    if (k < 0) malformed(path, "vertex element lacks x, y or z");

  geom::PointCloud cloud;
  cloud.points.reserve(vertex->count);
  std::vector<double> values;
  if (*format == PlyFormat::kAscii) {
    // Each record is a run of whitespace-separated tokens; lines carry no
    // meaning beyond separation.
    for (const auto& e : elements) {
      for (std::size_t r = 0; r < e.count; ++r) {
        values.assign(e.properties.size(), 0.0);
        for (std::size_t i = 0; i < e.properties.size(); ++i) {
          const auto& p = e.properties[i];
          double v;
          if (!(in >> v)) malformed(path, "truncated ASCII payload");
          if (p.list_count) {
            const std::size_t n = list_length(v, path);
            for (std::size_t k = 0; k < n; ++k)
              if (!(in >> v)) malformed(path, "truncated ASCII payload");
          } else {
            // Match the binary decoding of the declared type.
            values[i] = p.type == Scalar::kFloat32 ? static_cast<double>(static_cast<float>(v)) : v;
          }
        }
        if (&e == vertex) cloud.points.emplace_back(values[xyz[0]], values[xyz[1]], values[xyz[2]]);
      }
      if (&e == vertex) break;
    }
  } else {
    const std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader reader(data, path);
    for (const auto& e : elements) {
      for (std::size_t r = 0; r < e.count; ++r) {
        values.assign(e.properties.size(), 0.0);
        for (std::size_t i = 0; i < e.properties.size(); ++i) {
          const auto& p = e.properties[i];
          if (p.list_count) {
            const std::size_t n = list_length(reader.read(*p.list_count), path);
            for (std::size_t k = 0; k < n; ++k) reader.read(p.type);
          } else {
            values[i] = reader.read(p.type);
          }
        }
        if (&e == vertex) cloud.points.emplace_back(values[xyz[0]], values[xyz[1]], values[xyz[2]]);
      }
      if (&e == vertex) break;
    }
  }
  cloud.validate();
  return cloud;
}

void write_ply(const geom::PointCloud& cloud, const std::filesystem::path& path, PlyFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "ply\nformat " << (format == PlyFormat::kAscii ? "ascii" : "binary_little_endian") << " 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\nend_header\n";
  if (format == PlyFormat::kAscii) {
    out.precision(std::numeric_limits<float>::max_digits10);
    for (const auto& p : cloud.points)
      out << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z())
          << '\n';
  } else {
    for (const auto& p : cloud.points) {
      const float v[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())};
      out.write(reinterpret_cast<const char*>(v), sizeof(v));
    }
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace icoreg::pipeline
