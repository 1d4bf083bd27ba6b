#pragma once

#include <stdexcept>
#include <string>

namespace qaa {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct generation_error : error { using error::error; };
struct gauge_error : error { using error::error; };
struct duality_error : error { using error::error; };
struct solver_budget_error : error { using error::error; };
struct ensemble_error : error { using error::error; };
struct sector_error : error { using error::error; };
struct eigensolver_error : error { using error::error; };
struct fit_window_error : error { using error::error; };
struct fit_signal_error : error { using error::error; };
struct underdetermined_error : error { using error::error; };
struct convergence_error : error { using error::error; };
struct domain_error : error { using error::error; };
struct config_error : error { using error::error; };
struct aggregation_error : error { using error::error; };
struct io_error : error { using error::error; };

}  // namespace qaa
