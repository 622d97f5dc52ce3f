#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "workbench/action_data.hpp"

namespace workbench::analysis {

struct PcaResult {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;          // k x n, orthonormal rows
    Eigen::VectorXd explained_variance;  // ratios, non-increasing
    std::vector<Eigen::MatrixXd> projections;  // per input matrix: T x k
};

/// Rows of all matrices are pooled and mean-centred; components are the top-k eigenvectors
/// of the covariance, each signed so its largest-magnitude entry is positive.
/// Degenerate input (no variance) yields zero ratios with a valid basis.
PcaResult pca(const std::vector<Eigen::MatrixXd>& matrices, std::size_t k);

/// mean + projection * components, per input matrix.
std::vector<Eigen::MatrixXd> reconstruct(const PcaResult& result);

/// Mean silhouette over all projected points, clustered by source matrix, Euclidean distance
/// over the first two components (or fewer if k < 2). Singleton clusters score 0.
double separation_score(const std::vector<Eigen::MatrixXd>& projections);

struct RmseReport {
    double joints = 0.0;
    double facial = 0.0;
    double audio = 0.0;
    double overall = 0.0;
};

RmseReport trajectory_rmse(const data::NormalizedSequence& generated, const data::NormalizedSequence& teacher,
                           const data::Layout& layout);

/// sequence_id,t,pc1..pck
void write_projections_csv(const PcaResult& result, const std::vector<std::string>& names, const std::string& path);
/// component,explained_variance_ratio
void write_variance_csv(const PcaResult& result, const std::string& path);
/// sequence_id,joints,facial,audio,overall
void write_rmse_csv(const std::vector<std::string>& names, const std::vector<RmseReport>& reports,
                    const std::string& path);

}  // namespace workbench::analysis
