#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>

namespace fednh {

/// Scatter of 2-D points (2 x N) colored by label, with one ray per row of
/// `rays` (C x 2) drawn from the origin. Ray directions are normalized and
/// scaled to the plot radius.
std::string scatter_svg(const Eigen::MatrixXd& points, std::span<const int> labels,
                        const Eigen::MatrixXd& rays, const std::string& title);

/// C x C matrix as a blue-white-red grid on [-1, 1] with the values printed.
std::string heatmap_svg(const Eigen::MatrixXd& values, const std::string& title);

}  // namespace fednh
