#include "nsvi/grid.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "nsvi/error.hpp"

namespace nsvi {

MacGrid::MacGrid(int nx, int ny, double lx, double ly) : nx_(nx), ny_(ny), lx_(lx), ly_(ly), h_(0.0) {
    std::vector<std::string> problems;
    if (nx < 4 || ny < 4) problems.push_back("grid.nx and grid.ny must be >= 4");
    if (!(lx > 0.0) || !(ly > 0.0)) problems.push_back("grid extents must be > 0");
    if (problems.empty()) {
        const double hx = lx / nx;
        const double hy = ly / ny;
        if (std::abs(hx - hy) > 1e-12 * std::max(hx, hy))
            problems.push_back("grid must have a uniform mesh width (lx/nx == ly/ny)");
        h_ = hx;
    }
    if (!problems.empty()) throw ConfigError(problems);
}

Subdomain::Subdomain(const MacGrid& grid, std::vector<std::uint8_t> mask) : grid_(grid), mask_(std::move(mask)) {
    if (static_cast<int>(mask_.size()) != grid_.num_cells())
        throw DomainError("subdomain mask size does not match the grid");
}

Subdomain Subdomain::box(const MacGrid& grid, double x0, double x1, double y0, double y1) {
    std::vector<std::uint8_t> mask(grid.num_cells(), 0);
    for (int j = 0; j < grid.ny(); ++j)
        for (int i = 0; i < grid.nx(); ++i) {
            const double x = grid.cell_x(i);
            const double y = grid.cell_y(j);
            if (x >= x0 && x <= x1 && y >= y0 && y <= y1) mask[grid.cell_index(i, j)] = 1;
        }
    return Subdomain(grid, std::move(mask));
}

int Subdomain::count() const noexcept {
    return static_cast<int>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

VectorField::VectorField(const MacGrid& grid) : grid_(grid), dofs_(Eigen::VectorXd::Zero(grid.num_faces())) {}

VectorField::VectorField(const MacGrid& grid, Eigen::VectorXd dofs) : grid_(grid), dofs_(std::move(dofs)) {
    if (dofs_.size() != grid_.num_faces()) throw DomainError("vector field size does not match the grid");
}

static void require_same_grid(const MacGrid& a, const MacGrid& b) {
    if (!(a == b)) throw DomainError("fields live on different grids");
}

VectorField& VectorField::operator+=(const VectorField& o) {
    require_same_grid(grid_, o.grid_);
    dofs_ += o.dofs_;
    return *this;
}

VectorField& VectorField::operator-=(const VectorField& o) {
    require_same_grid(grid_, o.grid_);
    dofs_ -= o.dofs_;
    return *this;
}

VectorField& VectorField::operator*=(double s) {
    dofs_ *= s;
    return *this;
}

ScalarField::ScalarField(const MacGrid& grid) : grid_(grid), values_(Eigen::VectorXd::Zero(grid.num_cells())) {}

ScalarField::ScalarField(const MacGrid& grid, Eigen::VectorXd values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.num_cells()) throw DomainError("scalar field size does not match the grid");
}

// ---------------------------------------------------------------------------

ScalarField divergence(const VectorField& v) {
    const MacGrid& g = v.grid();
    ScalarField out(g);
    const double inv_h = 1.0 / g.h();
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i)
            out.values()[g.cell_index(i, j)] = (v.u(i + 1, j) - v.u(i, j) + v.v(i, j + 1) - v.v(i, j)) * inv_h;
    return out;
}

VectorField gradient(const ScalarField& phi) {
    const MacGrid& g = phi.grid();
    VectorField out(g);
    const double inv_h = 1.0 / g.h();
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 1; i < g.nx(); ++i) out.dofs()[g.u_index(i, j)] = (phi(i, j) - phi(i - 1, j)) * inv_h;
    for (int j = 1; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) out.dofs()[g.v_index(i, j)] = (phi(i, j) - phi(i, j - 1)) * inv_h;
    return out;
}

Eigen::VectorXd reconstruct_cells(const VectorField& v) {
    const MacGrid& g = v.grid();
    Eigen::VectorXd out(2 * g.num_cells());
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int c = g.cell_index(i, j);
            out[2 * c] = 0.5 * (v.u(i, j) + v.u(i + 1, j));
            out[2 * c + 1] = 0.5 * (v.v(i, j) + v.v(i, j + 1));
        }
    return out;
}

VectorField reconstruct_cells_adjoint(const MacGrid& g, const Eigen::VectorXd& w) {
    if (w.size() != 2 * g.num_cells()) throw DomainError("cell vector size does not match the grid");
    VectorField out(g);
    auto& d = out.dofs();
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int c = g.cell_index(i, j);
            if (int k = g.u_index(i, j); k >= 0) d[k] += 0.5 * w[2 * c];
            if (int k = g.u_index(i + 1, j); k >= 0) d[k] += 0.5 * w[2 * c];
            if (int k = g.v_index(i, j); k >= 0) d[k] += 0.5 * w[2 * c + 1];
            if (int k = g.v_index(i, j + 1); k >= 0) d[k] += 0.5 * w[2 * c + 1];
        }
    return out;
}

namespace {

double psi_at(const MacGrid& g, const Eigen::VectorXd& psi, int i, int j) {
    const int k = g.psi_index(i, j);
    return k < 0 ? 0.0 : psi[k];
}

}  // namespace

VectorField curl(const MacGrid& g, const Eigen::VectorXd& psi) {
    if (psi.size() != g.num_psi()) throw DomainError("stream function size does not match the grid");
    VectorField out(g);
    const double inv_h = 1.0 / g.h();
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 1; i < g.nx(); ++i)
            out.dofs()[g.u_index(i, j)] = (psi_at(g, psi, i, j + 1) - psi_at(g, psi, i, j)) * inv_h;
    for (int j = 1; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i)
            out.dofs()[g.v_index(i, j)] = -(psi_at(g, psi, i + 1, j) - psi_at(g, psi, i, j)) * inv_h;
    return out;
}

Eigen::VectorXd curl_adjoint(const VectorField& v) {
    const MacGrid& g = v.grid();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(g.num_psi());
    const double inv_h = 1.0 / g.h();
    auto add = [&](int i, int j, double val) {
        if (int k = g.psi_index(i, j); k >= 0) out[k] += val;
    };
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 1; i < g.nx(); ++i) {
            const double x = v.dofs()[g.u_index(i, j)] * inv_h;
            add(i, j + 1, x);
            add(i, j, -x);
        }
    for (int j = 1; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const double x = v.dofs()[g.v_index(i, j)] * inv_h;
            add(i + 1, j, -x);
            add(i, j, x);
        }
    return out;
}

SparseMatrix build_curl(const MacGrid& g) {
    std::vector<Triplet> t;
    t.reserve(2 * g.num_faces());
    const double inv_h = 1.0 / g.h();
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 1; i < g.nx(); ++i) {
            const int row = g.u_index(i, j);
            if (int k = g.psi_index(i, j + 1); k >= 0) t.emplace_back(row, k, inv_h);
            if (int k = g.psi_index(i, j); k >= 0) t.emplace_back(row, k, -inv_h);
        }
    for (int j = 1; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int row = g.v_index(i, j);
            if (int k = g.psi_index(i + 1, j); k >= 0) t.emplace_back(row, k, -inv_h);
            if (int k = g.psi_index(i, j); k >= 0) t.emplace_back(row, k, inv_h);
        }
    SparseMatrix m(g.num_faces(), g.num_psi());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SparseMatrix build_reconstruction(const MacGrid& g) {
    std::vector<Triplet> t;
    t.reserve(4 * g.num_cells());
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int c = g.cell_index(i, j);
            if (int k = g.u_index(i, j); k >= 0) t.emplace_back(2 * c, k, 0.5);
            if (int k = g.u_index(i + 1, j); k >= 0) t.emplace_back(2 * c, k, 0.5);
            if (int k = g.v_index(i, j); k >= 0) t.emplace_back(2 * c + 1, k, 0.5);
            if (int k = g.v_index(i, j + 1); k >= 0) t.emplace_back(2 * c + 1, k, 0.5);
        }
    SparseMatrix m(2 * g.num_cells(), g.num_faces());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SparseMatrix build_pressure_laplacian(const MacGrid& g) {
    std::vector<Triplet> t;
    t.reserve(5 * g.num_cells());
    const double s = 1.0 / (g.h() * g.h());
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int c = g.cell_index(i, j);
            double diag = 0.0;
            auto nb = [&](int ii, int jj) {
                if (ii < 0 || jj < 0 || ii >= g.nx() || jj >= g.ny()) return;
                t.emplace_back(c, g.cell_index(ii, jj), s);
                diag -= s;
            };
            nb(i - 1, j);
            nb(i + 1, j);
            nb(i, j - 1);
            nb(i, j + 1);
            t.emplace_back(c, c, diag);
        }
    SparseMatrix m(g.num_cells(), g.num_cells());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

ScalarField solve_pressure_poisson(const ScalarField& rhs, double rel_tol, int max_iter) {
    const MacGrid& g = rhs.grid();
    // -L is symmetric positive semidefinite with the constants as kernel.
    SparseMatrix neg_lap = -build_pressure_laplacian(g);
    Eigen::VectorXd b = -(rhs.values().array() - rhs.values().mean()).matrix();
    ScalarField phi(g);
    const double bnorm = b.norm();
    if (bnorm == 0.0) return phi;

    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(rel_tol);
    cg.setMaxIterations(max_iter);
    cg.compute(neg_lap);
    phi.values() = cg.solve(b);
    phi.values().array() -= phi.values().mean();

    const Eigen::VectorXd r = b - neg_lap * phi.values();
    const double rel = r.norm() / bnorm;
    // Iterative round-off may stall slightly above rel_tol; accept anything within the
    // documented 1e-10 relative target.
    if (cg.info() != Eigen::Success && rel > 1e-10) {
        throw NumericalError("pressure Poisson solve did not converge",
                             {{"relative_residual", rel}, {"iterations", static_cast<double>(cg.iterations())}});
    }
    return phi;
}

VectorField leray_project(const VectorField& v) {
    const ScalarField div = divergence(v);
    const ScalarField phi = solve_pressure_poisson(div);
    return v - gradient(phi);
}

Eigen::VectorXd solenoidal_coordinates(const VectorField& v) {
    const SparseMatrix c = build_curl(v.grid());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> gram(Eigen::SparseMatrix<double>(c.transpose()) * c);
    if (gram.info() != Eigen::Success) throw InvariantError("stream-function Gram matrix is singular");
    return gram.solve(Eigen::VectorXd(c.transpose() * v.dofs()));
}

// ---------------------------------------------------------------------------
// Convection
// ---------------------------------------------------------------------------

namespace {

/// Stencil of (a . grad) v at one face: value = sum coef_k * v.dofs[index_k].
/// Ghost values mirror the interior value across the wall (u_ghost = -u).
template <typename Emit>
void advection_stencil(const VectorField& a, Emit&& emit) {
    const MacGrid& g = a.grid();
    const double c = 0.5 / g.h();
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 1; i < g.nx(); ++i) {
            const int row = g.u_index(i, j);
            const double ax = a.u(i, j);
            const double ay = 0.25 * (a.v(i - 1, j) + a.v(i, j) + a.v(i - 1, j + 1) + a.v(i, j + 1));
            if (int k = g.u_index(i + 1, j); k >= 0) emit(row, k, ax * c);
            if (int k = g.u_index(i - 1, j); k >= 0) emit(row, k, -ax * c);
            if (j + 1 < g.ny())
                emit(row, g.u_index(i, j + 1), ay * c);
            else
                emit(row, row, -ay * c);
            if (j - 1 >= 0)
                emit(row, g.u_index(i, j - 1), -ay * c);
            else
                emit(row, row, ay * c);
        }
    for (int j = 1; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int row = g.v_index(i, j);
            const double ay = a.v(i, j);
            const double ax = 0.25 * (a.u(i, j - 1) + a.u(i + 1, j - 1) + a.u(i, j) + a.u(i + 1, j));
            if (i + 1 < g.nx())
                emit(row, g.v_index(i + 1, j), ax * c);
            else
                emit(row, row, -ax * c);
            if (i - 1 >= 0)
                emit(row, g.v_index(i - 1, j), -ax * c);
            else
                emit(row, row, ax * c);
            if (int k = g.v_index(i, j + 1); k >= 0) emit(row, k, ay * c);
            if (int k = g.v_index(i, j - 1); k >= 0) emit(row, k, -ay * c);
        }
}

double tilde_form(const VectorField& a, const VectorField& v, const VectorField& w) {
    const Eigen::VectorXd& vd = v.dofs();
    const Eigen::VectorXd& wd = w.dofs();
    double sum = 0.0;
    advection_stencil(a, [&](int row, int col, double coef) { sum += wd[row] * coef * vd[col]; });
    return a.grid().cell_area() * sum;
}

}  // namespace

VectorField advect(const VectorField& a, const VectorField& v) {
    require_same_grid(a.grid(), v.grid());
    VectorField out(a.grid());
    auto& o = out.dofs();
    const auto& vd = v.dofs();
    advection_stencil(a, [&](int row, int col, double coef) { o[row] += coef * vd[col]; });
    return out;
}

double convection_form(const VectorField& a, const VectorField& v, const VectorField& w) {
    require_same_grid(a.grid(), v.grid());
    require_same_grid(a.grid(), w.grid());
    return 0.5 * (tilde_form(a, v, w) - tilde_form(a, w, v));
}

SparseMatrix build_advection(const VectorField& a) {
    const MacGrid& g = a.grid();
    std::vector<Triplet> t;
    t.reserve(4 * g.num_faces());
    const double area = g.cell_area();
    advection_stencil(a, [&](int row, int col, double coef) { t.emplace_back(row, col, area * coef); });
    SparseMatrix m(g.num_faces(), g.num_faces());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

namespace {

/// One gradient sample: d = coef_a * dof_a + coef_b * dof_b, attached to one or two
/// faces (indexed over all faces, boundary included) with quadrature weights.
struct DiffTerm {
    int dof_a;
    double coef_a;
    int dof_b;
    double coef_b;
    int face0;
    double w0;
    int face1;
    double w1;
};

template <typename Visit>
void for_each_difference(const MacGrid& g, Visit&& visit) {
    const int nx = g.nx();
    const int ny = g.ny();
    const double c = 1.0 / g.h();
    auto uall = [&](int i, int j) { return j * (nx + 1) + i; };
    auto vall = [&](int i, int j) { return (nx + 1) * ny + j * nx + i; };

    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            visit(DiffTerm{g.u_index(i + 1, j), c, g.u_index(i, j), -c, uall(i, j), 0.5, uall(i + 1, j), 0.5});
    for (int i = 1; i < nx; ++i)
        for (int j = -1; j < ny; ++j) {
            if (j == -1)
                visit(DiffTerm{g.u_index(i, 0), 2 * c, -1, 0.0, uall(i, 0), 1.0, -1, 0.0});
            else if (j == ny - 1)
                visit(DiffTerm{g.u_index(i, ny - 1), -2 * c, -1, 0.0, uall(i, ny - 1), 1.0, -1, 0.0});
            else
                visit(DiffTerm{g.u_index(i, j + 1), c, g.u_index(i, j), -c, uall(i, j), 0.5, uall(i, j + 1), 0.5});
        }
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            visit(DiffTerm{g.v_index(i, j + 1), c, g.v_index(i, j), -c, vall(i, j), 0.5, vall(i, j + 1), 0.5});
    for (int j = 1; j < ny; ++j)
        for (int i = -1; i < nx; ++i) {
            if (i == -1)
                visit(DiffTerm{g.v_index(0, j), 2 * c, -1, 0.0, vall(0, j), 1.0, -1, 0.0});
            else if (i == nx - 1)
                visit(DiffTerm{g.v_index(nx - 1, j), -2 * c, -1, 0.0, vall(nx - 1, j), 1.0, -1, 0.0});
            else
                visit(DiffTerm{g.v_index(i + 1, j), c, g.v_index(i, j), -c, vall(i, j), 0.5, vall(i + 1, j), 0.5});
        }
}

int num_all_faces(const MacGrid& g) { return (g.nx() + 1) * g.ny() + g.nx() * (g.ny() + 1); }

double eval_diff(const DiffTerm& t, const Eigen::VectorXd& d) {
    double x = 0.0;
    if (t.dof_a >= 0) x += t.coef_a * d[t.dof_a];
    if (t.dof_b >= 0) x += t.coef_b * d[t.dof_b];
    return x;
}

}  // namespace

double inner_L2(const VectorField& a, const VectorField& b) {
    require_same_grid(a.grid(), b.grid());
    return a.grid().cell_area() * a.dofs().dot(b.dofs());
}

double norm_L2(const VectorField& v) { return std::sqrt(inner_L2(v, v)); }

double inner_H1(const VectorField& a, const VectorField& b) {
    require_same_grid(a.grid(), b.grid());
    double sum = 0.0;
    for_each_difference(a.grid(), [&](const DiffTerm& t) { sum += eval_diff(t, a.dofs()) * eval_diff(t, b.dofs()); });
    return a.grid().cell_area() * sum;
}

double seminorm_H1(const VectorField& v) { return std::sqrt(std::max(0.0, inner_H1(v, v))); }

double norm_W14(const VectorField& v) {
    const MacGrid& g = v.grid();
    std::vector<double> G(num_all_faces(g), 0.0);
    for_each_difference(g, [&](const DiffTerm& t) {
        const double d = eval_diff(t, v.dofs());
        G[t.face0] += t.w0 * d * d;
        if (t.face1 >= 0) G[t.face1] += t.w1 * d * d;
    });
    double sum = 0.0;
    for (double x : G) sum += x * x;
    return std::pow(g.cell_area() * sum, 0.25);
}

double norm_L4(const VectorField& v) {
    const Eigen::VectorXd w = reconstruct_cells(v);
    double sum = 0.0;
    for (Eigen::Index c = 0; c < w.size() / 2; ++c) {
        const double s = w[2 * c] * w[2 * c] + w[2 * c + 1] * w[2 * c + 1];
        sum += s * s;
    }
    return std::pow(v.grid().cell_area() * sum, 0.25);
}

double norm_Linf(const VectorField& v) {
    const Eigen::VectorXd w = reconstruct_cells(v);
    double m = 0.0;
    for (Eigen::Index c = 0; c < w.size() / 2; ++c) m = std::max(m, std::hypot(w[2 * c], w[2 * c + 1]));
    return m;
}

double sup_speed(const VectorField& v) {
    double m = norm_Linf(v);
    if (v.dofs().size() > 0) m = std::max(m, v.dofs().cwiseAbs().maxCoeff());
    return m;
}

DifferenceStencil build_difference_stencil(const MacGrid& g) {
    std::vector<Triplet> dt;
    std::vector<Triplet> wt;
    int row = 0;
    for_each_difference(g, [&](const DiffTerm& t) {
        if (t.dof_a >= 0) dt.emplace_back(row, t.dof_a, t.coef_a);
        if (t.dof_b >= 0) dt.emplace_back(row, t.dof_b, t.coef_b);
        wt.emplace_back(t.face0, row, t.w0);
        if (t.face1 >= 0) wt.emplace_back(t.face1, row, t.w1);
        ++row;
    });
    DifferenceStencil s;
    s.num_all_faces = num_all_faces(g);
    s.diff.resize(row, g.num_faces());
    s.diff.setFromTriplets(dt.begin(), dt.end());
    s.weights.resize(s.num_all_faces, row);
    s.weights.setFromTriplets(wt.begin(), wt.end());
    return s;
}

SparseMatrix build_stiffness(const MacGrid& g) {
    const DifferenceStencil s = build_difference_stencil(g);
    SparseMatrix k = SparseMatrix(s.diff.transpose()) * s.diff;
    k *= g.cell_area();
    return k;
}

// ---------------------------------------------------------------------------
// Ratio ascent shared by the dual norm and the embedding constants
// ---------------------------------------------------------------------------

namespace {

using ColSparse = Eigen::SparseMatrix<double>;

/// Value and z-gradient of log N(z) for the norms used in the ratio problems.
enum class NormKind { W14, H1, L2, L4, Linf };

struct NormEval {
    double value = 0.0;
    Eigen::VectorXd grad_log;  // gradient of log N with respect to face dofs
};

NormEval eval_norm(NormKind kind, const MacGrid& g, const DifferenceStencil& st, const SparseMatrix& rec,
                   const Eigen::VectorXd& z) {
    NormEval out;
    const double area = g.cell_area();
    switch (kind) {
        case NormKind::L2: {
            const double s = area * z.squaredNorm();
            out.value = std::sqrt(s);
            out.grad_log = (s > 0) ? Eigen::VectorXd(area * z / s) : Eigen::VectorXd::Zero(z.size());
            break;
        }
        case NormKind::H1: {
            const Eigen::VectorXd d = st.diff * z;
            const double s = area * d.squaredNorm();
            out.value = std::sqrt(s);
            out.grad_log = (s > 0) ? Eigen::VectorXd(st.diff.transpose() * (area * d) / s)
                                   : Eigen::VectorXd::Zero(z.size());
            break;
        }
        case NormKind::W14: {
            const Eigen::VectorXd d = st.diff * z;
            const Eigen::VectorXd G = st.weights * d.cwiseProduct(d);
            const double s = area * G.squaredNorm();
            out.value = std::pow(s, 0.25);
            if (s > 0) {
                const Eigen::VectorXd wg = st.weights.transpose() * G;
                out.grad_log = st.diff.transpose() * (area * d.cwiseProduct(wg)) / s;
            } else {
                out.grad_log = Eigen::VectorXd::Zero(z.size());
            }
            break;
        }
        case NormKind::L4: {
            const Eigen::VectorXd w = rec * z;
            Eigen::VectorXd gw(w.size());
            double s = 0.0;
            for (Eigen::Index c = 0; c < w.size() / 2; ++c) {
                const double q = w[2 * c] * w[2 * c] + w[2 * c + 1] * w[2 * c + 1];
                s += q * q;
                gw[2 * c] = q * w[2 * c];
                gw[2 * c + 1] = q * w[2 * c + 1];
            }
            s *= area;
            out.value = std::pow(s, 0.25);
            out.grad_log = (s > 0) ? Eigen::VectorXd(rec.transpose() * (area * gw) / s)
                                   : Eigen::VectorXd::Zero(z.size());
            break;
        }
        case NormKind::Linf: {
            const Eigen::VectorXd w = rec * z;
            Eigen::Index best = 0;
            double m = -1.0;
            for (Eigen::Index c = 0; c < w.size() / 2; ++c) {
                const double q = std::hypot(w[2 * c], w[2 * c + 1]);
                if (q > m) {
                    m = q;
                    best = c;
                }
            }
            out.value = std::max(m, 0.0);
            Eigen::VectorXd gw = Eigen::VectorXd::Zero(w.size());
            if (m > 0) {
                gw[2 * best] = w[2 * best] / (m * m);
                gw[2 * best + 1] = w[2 * best + 1] / (m * m);
            }
            out.grad_log = rec.transpose() * gw;
            break;
        }
    }
    return out;
}

struct AscentResult {
    double value = 0.0;
    double increment = 0.0;
    int iterations = 0;
    Eigen::VectorXd coords;
};

/**
 * Maximise the scale-invariant ratio f(psi) = num(z) / den(z), z = basis * psi, by
 * preconditioned gradient ascent on log f with backtracking. Ascent directions are
 * taken in the metric of `metric` (a factorised SPD matrix on the coordinates).
 */
template <typename LogNum, typename Metric>
AscentResult ratio_ascent(LogNum&& log_num, NormKind den, const MacGrid& g, const DifferenceStencil& st,
                          const SparseMatrix& rec, const SparseMatrix& basis, const Metric& metric,
                          Eigen::VectorXd psi, int max_iter, double tol) {
    auto evaluate = [&](const Eigen::VectorXd& coords, Eigen::VectorXd* grad) {
        const Eigen::VectorXd z = basis * coords;
        Eigen::VectorXd gnum;
        const double ln = log_num(z, grad ? &gnum : nullptr);
        const NormEval d = eval_norm(den, g, st, rec, z);
        if (!std::isfinite(ln) || d.value <= 0) return -std::numeric_limits<double>::infinity();
        if (grad) *grad = basis.transpose() * (gnum - d.grad_log);
        return ln - std::log(d.value);
    };

    AscentResult res;
    Eigen::VectorXd grad;
    double f = evaluate(psi, &grad);
    double step = 0.25;
    double last_inc = 0.0;
    int it = 0;
    for (; it < max_iter && std::isfinite(f); ++it) {
        Eigen::VectorXd dir = metric.solve(grad);
        const double dn = dir.norm();
        const double pn = psi.norm();
        if (dn == 0.0 || pn == 0.0) break;
        dir *= pn / dn;
        bool accepted = false;
        while (step > 1e-14) {
            Eigen::VectorXd trial = psi + step * dir;
            Eigen::VectorXd tgrad;
            const double ft = evaluate(trial, &tgrad);
            if (ft > f) {
                last_inc = std::expm1(ft - f);
                psi = trial / trial.norm() * pn;
                f = ft;
                grad = tgrad * (trial.norm() / pn);
                accepted = true;
                step = std::min(1.0, step * 2.0);
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            last_inc = 0.0;
            break;
        }
        if (last_inc < tol) break;
    }
    res.value = std::isfinite(f) ? std::exp(f) : 0.0;
    res.increment = last_inc;
    res.iterations = it;
    res.coords = std::move(psi);
    return res;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dual norm
// ---------------------------------------------------------------------------

struct DualNormEvaluator::Impl {
    MacGrid grid;
    DifferenceStencil stencil;
    SparseMatrix rec;
    SparseMatrix basis;  // faces x supported nodes
    Eigen::SimplicialLDLT<ColSparse> gram;
    Eigen::SimplicialLDLT<ColSparse> stiff;
    int dim = 0;

    explicit Impl(const Subdomain& sub) : grid(sub.grid()) {
        const MacGrid& g = grid;
        // A node is usable when its four surrounding cells are in the subdomain; the
        // velocity of such a stream function is then supported inside Omega'.
        std::vector<int> col_of(g.num_psi(), -1);
        for (int j = 1; j < g.ny(); ++j)
            for (int i = 1; i < g.nx(); ++i)
                if (sub.contains(i - 1, j - 1) && sub.contains(i, j - 1) && sub.contains(i - 1, j) && sub.contains(i, j))
                    col_of[g.psi_index(i, j)] = dim++;
        if (dim == 0) throw DomainError("subdomain has no interior degrees of freedom");

        const SparseMatrix full = build_curl(g);
        std::vector<Triplet> t;
        for (int r = 0; r < full.outerSize(); ++r)
            for (SparseMatrix::InnerIterator it(full, r); it; ++it)
                if (int c = col_of[it.col()]; c >= 0) t.emplace_back(r, c, it.value());
        basis.resize(g.num_faces(), dim);
        basis.setFromTriplets(t.begin(), t.end());

        stencil = build_difference_stencil(g);
        rec = build_reconstruction(g);
        ColSparse bt = ColSparse(basis.transpose());
        gram.compute(ColSparse(bt * basis));
        const SparseMatrix dz = stencil.diff * basis;
        stiff.compute(ColSparse(SparseMatrix(dz.transpose()) * dz));
        if (gram.info() != Eigen::Success || stiff.info() != Eigen::Success)
            throw InvariantError("restricted solenoidal basis is rank deficient");
    }
};

DualNormEvaluator::DualNormEvaluator(const Subdomain& subdomain) : impl_(std::make_unique<Impl>(subdomain)) {}
DualNormEvaluator::~DualNormEvaluator() = default;
DualNormEvaluator::DualNormEvaluator(DualNormEvaluator&&) noexcept = default;
DualNormEvaluator& DualNormEvaluator::operator=(DualNormEvaluator&&) noexcept = default;

int DualNormEvaluator::dimension() const noexcept { return impl_->dim; }

VectorField DualNormEvaluator::field_from_coordinates(const Eigen::VectorXd& coords) const {
    if (coords.size() != impl_->dim) throw DomainError("coordinate vector has the wrong dimension");
    return VectorField(impl_->grid, impl_->basis * coords);
}

DualNormResult DualNormEvaluator::evaluate(const VectorField& f, int max_iter, double tol) const {
    const Impl& m = *impl_;
    require_same_grid(m.grid, f.grid());
    DualNormResult out;
    const double area = m.grid.cell_area();
    const Eigen::VectorXd fd = f.dofs();
    if (fd.cwiseAbs().maxCoeff() == 0.0) return out;

    // Start from the L2 projection of f onto solenoidal fields supported in Omega'.
    Eigen::VectorXd psi = m.gram.solve(Eigen::VectorXd(m.basis.transpose() * fd));
    const double pair0 = area * fd.dot(m.basis * psi);
    if (!(pair0 > 1e-300) || psi.norm() == 0.0) return out;

    auto log_num = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
        const double pair = area * fd.dot(z);
        if (pair <= 0) return -std::numeric_limits<double>::infinity();
        if (grad) *grad = area * fd / pair;
        return std::log(pair);
    };
    const AscentResult r =
        ratio_ascent(log_num, NormKind::W14, m.grid, m.stencil, m.rec, m.basis, m.stiff, psi, max_iter, tol);
    out.value = r.value;
    out.increment = r.increment;
    out.iterations = r.iterations;
    return out;
}

DualNormResult dual_norm_W_star(const VectorField& f, const Subdomain& subdomain, int max_iter, double tol) {
    return DualNormEvaluator(subdomain).evaluate(f, max_iter, tol);
}

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

PoincareEstimate poincare_estimate(const MacGrid& g, double tol, int max_iter) {
    // Discrete Stokes eigenproblem on the solenoidal space, written in the stream-function
    // basis: (C^T K C) psi = lambda (h^2 C^T C) psi. Every iterate is solenoidal.
    const SparseMatrix c = build_curl(g);
    const SparseMatrix k = build_stiffness(g);
    const ColSparse a = ColSparse(SparseMatrix(c.transpose()) * k * c);
    const ColSparse m = ColSparse(SparseMatrix(c.transpose()) * c) * g.cell_area();
    Eigen::SimplicialLDLT<ColSparse> solver(a);
    if (solver.info() != Eigen::Success) throw NumericalError("Stokes operator factorisation failed");

    Eigen::VectorXd psi = Eigen::VectorXd::Ones(g.num_psi());
    psi /= std::sqrt(psi.dot(m * psi));
    double lambda = psi.dot(a * psi);
    PoincareEstimate est;
    for (int it = 1; it <= max_iter; ++it) {
        Eigen::VectorXd next = solver.solve(Eigen::VectorXd(m * psi));
        next /= std::sqrt(next.dot(m * next));
        const double lam = next.dot(a * next);
        psi = std::move(next);
        const double change = std::abs(lam - lambda) / lam;
        lambda = lam;
        if (change < tol) {
            est.lambda_min = lambda;
            est.constant = 1.0 / std::sqrt(lambda);
            est.iterations = it;
            return est;
        }
    }
    throw NumericalError("inverse power iteration for the Poincare constant did not converge",
                         {{"lambda", lambda}, {"iterations", static_cast<double>(max_iter)}});
}

double poincare_constant(const MacGrid& g) { return poincare_estimate(g).constant; }

ConstantsReport embedding_constants(const MacGrid& g, int restarts, std::uint64_t seed) {
    if (restarts < 1) throw DomainError("embedding_constants needs at least one restart");
    ConstantsReport rep;
    const PoincareEstimate pe = poincare_estimate(g);
    rep.L_P = pe.constant;
    rep.L1 = pe.constant;

    const DifferenceStencil st = build_difference_stencil(g);
    const SparseMatrix rec = build_reconstruction(g);
    const SparseMatrix basis = build_curl(g);
    const SparseMatrix dz = st.diff * basis;
    Eigen::SimplicialLDLT<ColSparse> metric(ColSparse(SparseMatrix(dz.transpose()) * dz));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    struct Problem {
        const char* name;
        NormKind num;
        NormKind den;
    };
    const Problem problems[] = {
        {"L0", NormKind::Linf, NormKind::W14},
        {"L2", NormKind::H1, NormKind::W14},
        {"L3", NormKind::L4, NormKind::H1},
    };
    constexpr int kMaxIter = 400;
    constexpr double kTol = 1e-9;

    rep.entries.push_back({"L_P", pe.constant, "inverse-power-iteration", pe.iterations});
    for (const Problem& p : problems) {
        double best = 0.0;
        int iters = 0;
        for (int r = 0; r < restarts; ++r) {
            Eigen::VectorXd psi(g.num_psi());
            for (Eigen::Index i = 0; i < psi.size(); ++i) psi[i] = normal(rng);
            // One smoothing sweep so ascent starts from a resolved field.
            psi = metric.solve(psi);
            auto log_num = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
                const NormEval e = eval_norm(p.num, g, st, rec, z);
                if (e.value <= 0) return -std::numeric_limits<double>::infinity();
                if (grad) *grad = e.grad_log;
                return std::log(e.value);
            };
            const AscentResult a = ratio_ascent(log_num, p.den, g, st, rec, basis, metric, psi, kMaxIter, kTol);
            iters += a.iterations;
            best = std::max(best, a.value);
        }
        if (std::string(p.name) == "L0") rep.L0 = best;
        if (std::string(p.name) == "L2") rep.L2 = best;
        if (std::string(p.name) == "L3") rep.L3 = best;
        rep.entries.push_back({p.name, best, "projected-ascent-lower-estimate", iters});
    }
    rep.entries.insert(rep.entries.begin() + 2, {"L1", pe.constant, "equals-L_P", pe.iterations});
    return rep;
}

}  // namespace nsvi
