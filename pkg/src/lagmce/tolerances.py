"""Central tolerance table shared by the library, unit tests and acceptance suite."""

# spectral core
EIG_RESIDUAL = 1e-12          # ||M g - g L||_inf <= EIG_RESIDUAL * (1 + ||M||_inf)
JACOBI_OFFDIAG = 1e-14        # stop when ||offdiag||_F < JACOBI_OFFDIAG * ||M||_F
TIE = 1e-10                   # eigenvalues closer than this are treated as equal
DEGENERATE_GAP = 1e-8         # eigen_derivative refuses gaps <= this
CRITICAL_PHASE = 1e-12        # |theta| == (n-2)pi/2 test
INEQUALITY_FLOOR = 1e-10      # lambda-inequalities checked as margin >= -floor

# geometry
IDENTITY_GAP = 1e-6           # lambda_m - lambda_{m+1} guard for Jacobi identities
JACOBI_IDENTITY = 1e-6
DIVERGENCE_IDENTITY = 1e-7
MEAN_CURVATURE = 1e-7
VLAI_RELATIVE = 1e-9
FD_STEP = 1e-3                # relative step of nested numerical differentiation

# rotation
ROTATION_IDENTITY = 1e-9
BETA_STAR_INVERSION = 1e-10
SINGULAR_JACOBIAN = 1e-10
JACOBIAN_LOWER = 1.0 / 3.0
INVERSE_LOOKUP = 1e-10
INVERSE_LOOKUP_MAXITER = 50

# counterexample
QUADRATURE_RTOL = 1e-10
EPS_RANGE = (1e-4, 0.5)

# solver
SOLVE_TOL = 1e-9
CG_RTOL = 1e-10
BRACKET_SLACK = 1e-7
CONTINUATION_DT0 = 0.25
CONTINUATION_DT_MIN = 1e-4
ARMIJO_C = 1e-4
ARMIJO_MAX_HALVINGS = 10
