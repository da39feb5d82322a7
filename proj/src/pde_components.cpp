#include "unisolver/pde_components.hpp"

#include <cmath>
#include <stdexcept>

namespace unisolver {

Category categorize(ComponentKind kind) {
    switch (kind) {
        case ComponentKind::EquationFormulation:
        case ComponentKind::EquationCoefficient:
        case ComponentKind::BoundaryConditionType:
            return Category::DomainWise;
        case ComponentKind::ExternalForce:
        case ComponentKind::DomainGeometry:
        case ComponentKind::BoundaryValueFunction:
            return Category::PointWise;
    }
    throw std::invalid_argument("categorize: unknown component kind");
}

ComponentKind component_kind_from_string(const std::string& name) {
    if (name == "equation_formulation") return ComponentKind::EquationFormulation;
    if (name == "equation_coefficient") return ComponentKind::EquationCoefficient;
    if (name == "boundary_condition_type")
        return ComponentKind::BoundaryConditionType;
    if (name == "external_force") return ComponentKind::ExternalForce;
    if (name == "domain_geometry") return ComponentKind::DomainGeometry;
    if (name == "boundary_value_function")
        return ComponentKind::BoundaryValueFunction;
    throw std::invalid_argument("unknown component kind: \"" + name + "\"");
}

std::string component_kind_name(ComponentKind kind) {
    switch (kind) {
        case ComponentKind::EquationFormulation: return "equation_formulation";
        case ComponentKind::EquationCoefficient: return "equation_coefficient";
        case ComponentKind::BoundaryConditionType:
            return "boundary_condition_type";
        case ComponentKind::ExternalForce: return "external_force";
        case ComponentKind::DomainGeometry: return "domain_geometry";
        case ComponentKind::BoundaryValueFunction:
            return "boundary_value_function";
    }
    throw std::invalid_argument("component_kind_name: unknown kind");
}

std::string boundary_kind_name(BoundaryKind kind) {
    switch (kind) {
        case BoundaryKind::Periodic: return "periodic";
        case BoundaryKind::Dirichlet: return "dirichlet";
        case BoundaryKind::Neumann: return "neumann";
        case BoundaryKind::Robin: return "robin";
    }
    throw std::invalid_argument("boundary_kind_name: unknown kind");
}

double GridSpec::dx() const {
    if (n_x < 2) throw std::invalid_argument("GridSpec::dx needs n_x >= 2");
    return (x_max - x_min) / static_cast<double>(n_x - 1);
}

double GridSpec::dy() const {
    if (n_y < 2) throw std::invalid_argument("GridSpec::dy needs n_y >= 2");
    return (y_max - y_min) / static_cast<double>(n_y - 1);
}

double GridSpec::dt() const {
    if (n_t < 2) throw std::invalid_argument("GridSpec::dt needs n_t >= 2");
    return (t_max - t_min) / static_cast<double>(n_t - 1);
}

std::size_t Field::size() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

namespace {

void check_field_structure(const Field& f, const GridSpec& grid,
                           const std::string& what,
                           std::vector<std::string>& out) {
    if (f.shape.size() < 2 || f.shape.size() > 3) {
        out.push_back(what + " \"" + f.name + "\": rank " +
                      std::to_string(f.shape.size()) +
                      " unsupported (want [channels, x] or [channels, row, x])");
        return;
    }
    if (f.shape.front() == 0)
        out.push_back(what + " \"" + f.name + "\": zero channels");
    if (f.shape.back() != grid.n_x)
        out.push_back(what + " \"" + f.name + "\": last axis " +
                      std::to_string(f.shape.back()) + " != n_x " +
                      std::to_string(grid.n_x));
    if (f.shape.size() == 3) {
        std::size_t rows = f.shape[1];
        bool ok = (grid.spatial_dims == 2) ? (rows == grid.n_y)
                                           : (rows == grid.n_t);
        if (!ok)
            out.push_back(what + " \"" + f.name + "\": middle axis " +
                          std::to_string(rows) + " matches neither n_y nor n_t");
    } else if (grid.spatial_dims == 2) {
        out.push_back(what + " \"" + f.name +
                      "\": 2-D grid requires [channels, n_y, n_x]");
    }
    if (f.values.size() != f.size())
        out.push_back(what + " \"" + f.name + "\": value count " +
                      std::to_string(f.values.size()) + " != shape product " +
                      std::to_string(f.size()));
    for (double v : f.values) {
        if (!std::isfinite(v)) {
            out.push_back(what + " \"" + f.name + "\": non-finite value");
            break;
        }
    }
}

// True when flat index (row, col) of a [rows, cols] plane lies on the
// boundary of the sample's spatial domain. For 1-D grids only the x border
// counts (rows enumerate time levels); for 2-D grids the whole one-cell
// border does.
bool on_spatial_border(std::size_t row, std::size_t col, std::size_t rows,
                       std::size_t cols, bool two_dee) {
    bool x_border = (col == 0 || col + 1 == cols);
    if (!two_dee) return x_border;
    return x_border || row == 0 || row + 1 == rows;
}

}  // namespace

std::vector<std::string> validate(const Sample& sample, const GridSpec& grid) {
    std::vector<std::string> out;

    if (grid.spatial_dims != 1 && grid.spatial_dims != 2)
        out.push_back("grid: spatial_dims must be 1 or 2");
    if (grid.n_x < 2) out.push_back("grid: n_x must be >= 2");
    if (grid.spatial_dims == 2 && grid.n_y < 2)
        out.push_back("grid: n_y must be >= 2 for 2-D grids");
    if (!(grid.x_max > grid.x_min)) out.push_back("grid: empty x range");
    if (grid.spatial_dims == 2 && !(grid.y_max > grid.y_min))
        out.push_back("grid: empty y range");
    if (grid.n_t < 1) out.push_back("grid: n_t must be >= 1");
    if (grid.t_max < grid.t_min) out.push_back("grid: t range reversed");
    if (!out.empty()) return out;  // field checks need a sane grid

    const auto& c = sample.components;
    if (c.symbols.empty()) out.push_back("components: empty symbols string");
    for (const auto& [name, v] : c.coefficients) {
        if (!std::isfinite(v))
            out.push_back("components: coefficient \"" + name +
                          "\" is non-finite");
    }

    if (c.has_force) check_field_structure(c.force, grid, "force", out);
    if (c.has_kappa) check_field_structure(c.kappa, grid, "kappa", out);

    if (c.has_geometry) {
        check_field_structure(c.geometry_mask, grid, "geometry_mask", out);
        for (double v : c.geometry_mask.values) {
            if (v != 0.0 && v != 1.0) {
                out.push_back("geometry_mask: value " + std::to_string(v) +
                              " is not binary");
                break;
            }
        }
    }

    if (c.boundary.periodic && c.has_boundary_values)
        out.push_back(
            "boundary: periodic boundary excludes a boundary value function");

    if (c.has_boundary_values) {
        const Field& f = c.boundary_values;
        check_field_structure(f, grid, "boundary_values", out);
        if (f.values.size() == f.size() && f.shape.size() >= 2) {
            std::size_t cols = f.shape.back();
            std::size_t rows = f.shape.size() == 3 ? f.shape[1] : 1;
            std::size_t channels = f.shape.front();
            bool two_dee = (grid.spatial_dims == 2);
            for (std::size_t ch = 0; ch < channels; ++ch) {
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t col = 0; col < cols; ++col) {
                        double v = f.values[(ch * rows + r) * cols + col];
                        if (v != 0.0 &&
                            !on_spatial_border(r, col, rows, cols, two_dee)) {
                            out.push_back(
                                "boundary_values: non-zero interior value at "
                                "row " + std::to_string(r) + ", col " +
                                std::to_string(col));
                            r = rows;  // one report per field is enough
                            break;
                        }
                    }
                }
            }
        }
    }

    for (const Field& f : sample.inputs)
        check_field_structure(f, grid, "input", out);
    for (const Field& f : sample.outputs)
        check_field_structure(f, grid, "output", out);
    if (sample.inputs.empty()) out.push_back("sample: no input fields");
    if (sample.outputs.empty()) out.push_back("sample: no output fields");

    return out;
}

}  // namespace unisolver
