#pragma once

// Text tensor dump used for checkpoints.
//
//   fedrec-tensors 1
//   tensor <name> <rows> <cols>
//   <row 0 values, space separated, %.17g>
//   ...
//   end
//
// Values are written row-major with 17 significant digits, so a dump
// followed by a load reproduces every double exactly.

#include <Eigen/Dense>

#include <iosfwd>
#include <map>
#include <string>

namespace fedrec {

using TensorMap = std::map<std::string, Eigen::MatrixXd>;

void write_tensor(std::ostream& os, const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& m);
void write_tensor_header(std::ostream& os);
void write_tensor_footer(std::ostream& os);

void save_tensors(const std::string& path, const TensorMap& tensors);
TensorMap read_tensors(std::istream& is);
TensorMap load_tensors(const std::string& path);

}  // namespace fedrec
