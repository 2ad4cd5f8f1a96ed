#include "cpr/npy.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

namespace cpr {
namespace {

constexpr std::string_view kMagic = "\x93NUMPY";
constexpr std::size_t kAlign = 64;

template <class U>
U byteswap(U v) {
  U out = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xFF));
  }
  return out;
}

template <class U>
U from_little(const char* p) {
  U v;
  std::memcpy(&v, p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
  return v;
}

template <class U>
void append_little(std::string& out, U v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

[[noreturn]] void fail(std::string_view source, const std::string& msg) {
  throw FormatError(std::string(source) + ": " + msg);
}

// Minimal reader for the Python dict literal found in NPY headers.
class HeaderParser {
 public:
  HeaderParser(std::string_view text, std::string_view source) : text_(text), source_(source) {}

  struct Fields {
    std::string descr;
    bool fortran_order = false;
    Shape shape;
  };

  Fields parse() {
    Fields f;
    bool have_descr = false, have_order = false, have_shape = false;
    skip_ws();
    expect('{', "header");
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      std::string key = parse_string("header key");
      skip_ws();
      expect(':', "header");
      skip_ws();
      if (key == "descr") {
        f.descr = parse_string("descr");
        have_descr = true;
      } else if (key == "fortran_order") {
        f.fortran_order = parse_bool();
        have_order = true;
      } else if (key == "shape") {
        f.shape = parse_shape();
        have_shape = true;
      } else {
        fail(source_, "malformed header: unexpected key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != '}') {
        fail(source_, "malformed header: expected ',' or '}' after field '" + key + "'");
      }
    }
    if (!have_descr) fail(source_, "malformed header: missing field 'descr'");
    if (!have_order) fail(source_, "malformed header: missing field 'fortran_order'");
    if (!have_shape) fail(source_, "malformed header: missing field 'shape'");
    return f;
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect(char c, const char* field) {
    if (peek() != c) {
      fail(source_, std::string("malformed header: expected '") + c + "' in field '" + field + "'");
    }
    ++pos_;
  }

  std::string parse_string(const char* field) {
    char quote = peek();
    if (quote != '\'' && quote != '"') {
      fail(source_, std::string("malformed header: expected string for field '") + field + "'");
    }
    ++pos_;
    auto end = text_.find(quote, pos_);
    if (end == std::string_view::npos) {
      fail(source_, std::string("malformed header: unterminated string in field '") + field + "'");
    }
    std::string s(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return s;
  }

  bool parse_bool() {
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    fail(source_, "malformed header: field 'fortran_order' is not True/False");
  }

  Shape parse_shape() {
    Shape shape;
    expect('(', "shape");
    while (true) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        break;
      }
      if (!std::isdigit(static_cast<unsigned char>(peek()))) {
        fail(source_, "malformed header: non-integer dimension in field 'shape'");
      }
      std::size_t d = 0;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        std::size_t digit = static_cast<std::size_t>(peek() - '0');
        if (d > (SIZE_MAX - digit) / 10) fail(source_, "shape overflow in field 'shape'");
        d = d * 10 + digit;
        ++pos_;
      }
      shape.push_back(d);
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ')') {
        fail(source_, "malformed header: expected ',' or ')' in field 'shape'");
      }
    }
    return shape;
  }

  std::string_view text_;
  std::string_view source_;
  std::size_t pos_ = 0;
};

std::string header_dict(const Shape& shape) {
  std::ostringstream os;
  os << "{'descr': '<f4', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << "), }";
  return os.str();
}

}  // namespace

std::string encode_npy(const Tensor& t) {
  std::string header = header_dict(t.shape());
  // magic(6) + version(2) + header length(2) + header + '\n', padded to kAlign.
  std::size_t unpadded = kMagic.size() + 2 + 2 + header.size() + 1;
  std::size_t padded = (unpadded + kAlign - 1) / kAlign * kAlign;
  header.append(padded - unpadded, ' ');
  header.push_back('\n');

  std::string out;
  out.reserve(padded + t.size() * sizeof(float));
  out.append(kMagic);
  out.push_back('\x01');
  out.push_back('\x00');
  append_little<std::uint16_t>(out, static_cast<std::uint16_t>(header.size()));
  out.append(header);
  for (float v : t.data()) append_little<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_npy(std::string_view bytes, std::string_view source) {
  if (bytes.size() < kMagic.size() + 4) fail(source, "malformed header: file too short");
  if (bytes.substr(0, kMagic.size()) != kMagic) fail(source, "malformed header: bad magic string");
  unsigned major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t prefix = 0;
  if (major == 1) {
    header_len = from_little<std::uint16_t>(bytes.data() + 8);
    prefix = 10;
  } else if (major == 2) {
    if (bytes.size() < 12) fail(source, "malformed header: file too short");
    header_len = from_little<std::uint32_t>(bytes.data() + 8);
    prefix = 12;
  } else {
    fail(source, "malformed header: unsupported version " + std::to_string(major));
  }
  if (bytes.size() < prefix + header_len) fail(source, "malformed header: truncated header");

  auto fields = HeaderParser(bytes.substr(prefix, header_len), source).parse();
  if (fields.fortran_order) fail(source, "unsupported layout: field 'fortran_order' is True");

  std::size_t width = 0;
  if (fields.descr == "<f4") {
    width = 4;
  } else if (fields.descr == "<f8") {
    width = 8;
  } else {
    fail(source, "unsupported dtype '" + fields.descr + "' in field 'descr'");
  }

  std::size_t count = 0;
  try {
    count = element_count(fields.shape);
  } catch (const ShapeError&) {
    fail(source, "shape overflow in field 'shape' " + to_string(fields.shape));
  }
  if (count > SIZE_MAX / width) fail(source, "shape overflow in field 'shape' " + to_string(fields.shape));

  std::size_t data_start = prefix + header_len;
  std::size_t expected = count * width;
  std::size_t available = bytes.size() - data_start;
  if (available < expected) {
    fail(source, "truncated data: expected " + std::to_string(expected) + " bytes, found " +
                     std::to_string(available));
  }
  if (available > expected) {
    fail(source, "trailing data: " + std::to_string(available - expected) + " unexpected bytes");
  }

  std::vector<float> data(count);
  const char* p = bytes.data() + data_start;
  for (std::size_t i = 0; i < count; ++i) {
    float v;
    if (width == 4) {
      v = std::bit_cast<float>(from_little<std::uint32_t>(p + 4 * i));
    } else {
      v = static_cast<float>(std::bit_cast<double>(from_little<std::uint64_t>(p + 8 * i)));
    }
    if (!std::isfinite(v)) fail(source, "non-finite value at element " + std::to_string(i));
    data[i] = v;
  }
  return Tensor(std::move(fields.shape), std::move(data));
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string() + ": read failed");
  return decode_npy(bytes, path.string());
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  require_finite(t, path.string().c_str());
  std::string bytes = encode_npy(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace cpr
