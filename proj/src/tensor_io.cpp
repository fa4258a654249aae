#include "fedrec/tensor_io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fedrec/errors.hpp"

namespace fedrec {

namespace {
constexpr const char* kMagic = "fedrec-tensors";
constexpr int kVersion = 1;
}  // namespace

void write_tensor_header(std::ostream& os) { os << kMagic << ' ' << kVersion << '\n'; }
void write_tensor_footer(std::ostream& os) { os << "end\n"; }

void write_tensor(std::ostream& os, const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
    throw ConfigError("tensor name must be a single non-empty token: '" + name + "'");
  os << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      if (j) os << ' ';
      os << buf;
    }
    os << '\n';
  }
}

void save_tensors(const std::string& path, const TensorMap& tensors) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_tensor_header(os);
  for (const auto& [name, m] : tensors) write_tensor(os, name, m);
  write_tensor_footer(os);
}

TensorMap read_tensors(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic) throw ParseError(1, "not a tensor dump");
  if (version != kVersion) throw ParseError(1, "unsupported tensor dump version " + std::to_string(version));
  TensorMap out;
  std::string tag;
  while (is >> tag) {
    if (tag == "end") return out;
    if (tag != "tensor") throw ParseError(0, "expected 'tensor', got '" + tag + "'");
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    if (!(is >> name >> rows >> cols) || rows < 0 || cols < 0) throw ParseError(0, "bad tensor header");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        std::string tok;
        if (!(is >> tok)) throw ParseError(0, "truncated tensor " + name);
        m(i, j) = std::strtod(tok.c_str(), nullptr);
      }
    out.emplace(name, std::move(m));
  }
  throw ParseError(0, "missing 'end' marker");
}

TensorMap load_tensors(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  return read_tensors(is);
}

}  // namespace fedrec
