#pragma once

#include <iosfwd>
#include <string>

#include "tpspline/model.hpp"

namespace tps {

inline constexpr const char* kModelFormatVersion = "1";

/// Plain-text model document:
///
///   version 1
///   m <int>
///   d <int>
///   domain <lo> <hi>
///   lambda <real>
///   j_value <real>
///   en_value <real>
///   anchors <M>        followed by M rows of d reals
///   knots <n>          followed by n rows of d reals
///   poly_coeffs <M>    followed by M reals, one per line
///   kernel_coeffs <n>  followed by n reals, one per line
///
/// Reals are written with 17 significant digits. Cardinal polynomials are
/// rebuilt from the stored anchors on load.
std::string serialize(const SplineModel<double>& model);
SplineModel<double> deserialize(const std::string& document);

void save_model(const SplineModel<double>& model, const std::string& path);
SplineModel<double> load_model(const std::string& path);

}  // namespace tps
