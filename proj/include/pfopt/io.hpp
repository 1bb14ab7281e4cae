#pragma once

#include "pfopt/config.hpp"
#include "pfopt/mesh.hpp"
#include "pfopt/optimizer.hpp"

#include <map>
#include <string>

namespace pfopt {

/// Legacy ASCII VTK unstructured grid with triangle cells. Scalars are P1
/// nodal, vectors are P2 nodal restricted to the mesh vertices and written as
/// 3-vectors with zero third component.
void write_vtk(const std::string& path, const TriMesh& mesh,
               const std::map<std::string, const Eigen::VectorXd*>& point_scalars,
               const std::map<std::string, const Eigen::VectorXd*>& point_vectors_p2);

std::string csv_header();
std::string csv_row(const LogRow& row);

/// VTK snapshots, CSV time series, and a plain-text summary under config.output.dir.
void write_outputs(const Trajectory& trajectory, const RunConfig& config);

}  // namespace pfopt
