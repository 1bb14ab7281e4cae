#include "pfopt/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pfopt {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_vtk(const std::string& path, const TriMesh& mesh,
               const std::map<std::string, const Eigen::VectorXd*>& point_scalars,
               const std::map<std::string, const Eigen::VectorXd*>& point_vectors_p2) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_vtk: cannot open '" + path + "'");

    const int nv = mesh.n_vertices();
    const int nt = mesh.n_triangles();

    out << "# vtk DataFile Version 4.2\n";
    out << "pfopt fields\n";
    out << "ASCII\n";
    out << "DATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << nv << " double\n";
    for (const auto& v : mesh.vertices)
        out << fmt(v.x()) << " " << fmt(v.y()) << " 0\n";
    out << "CELLS " << nt << " " << 4 * nt << "\n";
    for (const auto& t : mesh.triangles) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    out << "CELL_TYPES " << nt << "\n";
    for (int t = 0; t < nt; ++t) out << "5\n";

    out << "POINT_DATA " << nv << "\n";
    for (const auto& [name, field] : point_scalars) {
        if (!field || field->size() < nv)
            throw std::runtime_error("write_vtk: scalar '" + name + "' too short");
        out << "SCALARS " << name << " double 1\n";
        out << "LOOKUP_TABLE default\n";
        for (int i = 0; i < nv; ++i) out << fmt((*field)[i]) << "\n";
    }
    for (const auto& [name, field] : point_vectors_p2) {
        if (!field || field->size() < 2 * nv)
            throw std::runtime_error("write_vtk: vector '" + name + "' too short");
        out << "VECTORS " << name << " double\n";
        for (int i = 0; i < nv; ++i)
            out << fmt((*field)[2 * i]) << " " << fmt((*field)[2 * i + 1]) << " 0\n";
    }
    if (!out) throw std::runtime_error("write_vtk: write failed for '" + path + "'");
}

std::string csv_header() {
    return "step,tau,mu,gamma,J_total,J_porous,J_GL,J_force,FD_vol,FD_surf,FL_vol,R,mass_err,"
           "com_y";
}

std::string csv_row(const LogRow& r) {
    std::ostringstream os;
    os << r.step << ',' << fmt(r.tau) << ',' << fmt(r.mu) << ',' << fmt(r.gamma) << ','
       << fmt(r.j_total) << ',' << fmt(r.j_porous) << ',' << fmt(r.j_gl) << ','
       << fmt(r.j_force) << ',' << fmt(r.fd_vol) << ',' << fmt(r.fd_surf) << ','
       << fmt(r.fl_vol) << ',' << fmt(r.ratio) << ',' << fmt(r.mass_err) << ',' << fmt(r.com);
    return os.str();
}

void write_outputs(const Trajectory& traj, const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output.dir);

    {
        std::ofstream csv(fs::path(cfg.output.dir) / "timeseries.csv");
        if (!csv) throw std::runtime_error("write_outputs: cannot open timeseries.csv");
        csv << csv_header() << "\n";
        for (const auto& row : traj.rows) csv << csv_row(row) << "\n";
    }

    for (const auto& snap : traj.snapshots) {
        char name[64];
        std::snprintf(name, sizeof(name), "fields_%06d.vtk", snap.step);
        write_vtk((fs::path(cfg.output.dir) / name).string(), snap.mesh,
                  {{"phi", &snap.phi}, {"w", &snap.w}, {"p", &snap.p}, {"pi", &snap.pi}},
                  {{"u", &snap.u}, {"q", &snap.q}});
    }
    write_vtk((fs::path(cfg.output.dir) / "fields_final.vtk").string(), traj.final_mesh,
              {{"phi", &traj.final_phi},
               {"w", &traj.final_w},
               {"p", &traj.final_state.p},
               {"pi", &traj.final_adjoint.pi}},
              {{"u", &traj.final_state.u}, {"q", &traj.final_adjoint.q}});

    {
        std::ofstream sum(fs::path(cfg.output.dir) / "summary.txt");
        const LogRow& first = traj.rows.front();
        const LogRow& last = traj.rows.back();
        char buf[256];
        sum << "steps: " << last.step << "\n";
        sum << "stop_reason: " << traj.stop_reason << "\n";
        std::snprintf(buf, sizeof(buf), "F^D initial: %.5g\n", first.fd_vol);
        sum << buf;
        std::snprintf(buf, sizeof(buf), "F^D final:   %.5g\n", last.fd_vol);
        sum << buf;
        std::snprintf(buf, sizeof(buf), "F^D surface: %.5g\n", last.fd_surf);
        sum << buf;
        std::snprintf(buf, sizeof(buf), "F^L final:   %.5g\n", last.fl_vol);
        sum << buf;
        std::snprintf(buf, sizeof(buf), "R initial:   %.5g\n", first.ratio);
        sum << buf;
        std::snprintf(buf, sizeof(buf), "R final:     %.5g\n", last.ratio);
        sum << buf;
        std::snprintf(buf, sizeof(buf), "J final:     %.5g\n", last.j_total);
        sum << buf;
        std::snprintf(buf, sizeof(buf), "mass error:  %.3g\n", last.mass_err);
        sum << buf;
        std::snprintf(buf, sizeof(buf), "com_y drift: %.3g\n",
                      std::abs(last.com - first.com));
        sum << buf;
    }
}

}  // namespace pfopt
