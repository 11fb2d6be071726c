''' Configuration constants for the reaction-diffusion equation-learning library.
    Every dataclass default in the package reads from this module; run-level
    overrides come from the pipeline's RunConfig.
'''


# ---------------------------------------------------------------- grid
'''Spatial bin edge length in mm (both axes share one bin size)'''
bin_size = 0.1

'''Decimal places used when locating a coordinate on the bin lattice.
    Absorbs floating point error such as 0.3 / 0.1 = 2.9999999999999996'''
bin_snap_decimals = 9


# ---------------------------------------------------------------- synth
'''Reference synthetic diffusion, mm^2/day, in the normalised density U'''
reference_diffusion = "0.01 + 0.02*exp(2*U)"

'''Reference synthetic per-capita growth, 1/day, in the normalised density U'''
reference_growth = "1.0 - 1.0*U"

'''Noise exponent gamma of the observation model'''
noise_gamma = 0.0

'''Noise scale omega (constant over the grid); with gamma = 0 this is the noise
standard deviation in cells per bin, 10% of ic_peak'''
noise_omega = 1.2

'''Peak density of the synthetic initial condition, cells per bin'''
ic_peak = 12.0

'''Number of Gaussian clusters in the synthetic initial condition'''
ic_bumps = 3

'''Gaussian cluster width as a fraction of the shorter domain side'''
ic_bump_width = 0.15

'''Density u_ref that normalises U = u / u_ref inside the true-model
    expressions; also the logistic carrying capacity of reference_growth'''
density_reference = 15.0

'''Synthetic domain (x1_min, x1_max, x2_min, x2_max, t_min, t_max), mm and days'''
synth_domain = (0.0, 1.5, 0.0, 1.1, 0.0, 2.0)

'''Number of equally spaced synthetic frames, t_min and t_max included'''
synth_frames = 9


# ---------------------------------------------------------------- mlp
'''Hidden widths of the density network NN_u'''
hidden_widths_u = (64, 64, 64)

'''Hidden widths of the diffusion and growth networks NN_D, NN_G'''
hidden_widths_rate = (4, 4, 4)

'''Hidden activation of every network'''
hidden_activation = "silu"

'''Weight initialiser name (only glorot_uniform is provided)'''
initializer = "glorot_uniform"


# ---------------------------------------------------------------- binn
'''Loss weights of the total loss'''
lambda_data = 1.0
lambda_pde = 1.0
lambda_bio = 0.0

'''Fraction of grid entries assigned to the training set'''
train_fraction = 0.8

'''Number of TV splits forming the ensemble'''
n_splits = 5

'''Collocation points per data entry, and the hard cap'''
collocation_per_entry = 10
collocation_cap = 10_000

'''Fixed validation collocation set size cap'''
validation_collocation_cap = 2_000

'''Early stopping: relative improvement required and the default patience'''
es_improvement = 0.05
es_patience = 500

'''Patience sweep used by the train stage'''
es_sweep = (500, 1000, 2000)

'''Adam optimiser'''
learning_rate = 1e-3
adam_beta1 = 0.9
adam_beta2 = 0.999
adam_epsilon = 1e-8

'''Hard epoch ceiling for one training job'''
max_epochs = 20_000

'''Epoch interval of the learned-function trace (0 disables it)'''
function_probe_every = 100

'''Number of scaled densities on the learned-function probe grid'''
function_probe_points = 16

'''Preferred ES rule: smallest patience within this relative distance of the best'''
preferred_es_tolerance = 0.03


# ---------------------------------------------------------------- ensemble
'''Central interval kept per split, as percentiles'''
support_percentiles = (5.0, 95.0)

'''Histogram bins of the training density distribution'''
histogram_bins = 32

'''Density grid size of ensemble curves'''
ensemble_grid_points = 128


# ---------------------------------------------------------------- sr
sr_population_size = 200
sr_generations = 200
sr_tournament_size = 5
sr_p_crossover = 0.7
sr_p_subtree_mutation = 0.125
sr_p_point_mutation = 0.125
sr_p_point_replace = 0.1
sr_max_complexity = 16
sr_parsimony = 1e-3
sr_init_depth = (2, 5)
sr_const_range = (-2.0, 2.0)
sr_binary_operators = ("add", "sub", "mul")
sr_unary_operators = ("exp", "square", "sqrt")

'''Probability that an offspring gets a quick least-squares constant fit'''
sr_p_optimize = 0.1

'''Function evaluations allowed for that quick fit'''
sr_optimize_nfev = 30

'''Coordinate-wise golden-section sweeps on each Pareto member after evolution'''
sr_refine_iterations = 50

'''Pareto "best" window: losses within this factor of the front minimum'''
sr_best_loss_window = 1.5

'''Independent seeded SR runs per curve'''
sr_repeats = 10

'''Restarts allowed after a population of guard errors'''
sr_max_restarts = 3

'''Minimum ensemble-curve length accepted by the SR fit'''
sr_min_points = 8

'''Denominator magnitude below which division is a guard error'''
division_guard = 1e-12


# ---------------------------------------------------------------- solver
'''Fraction of the explicit diffusion limit used as time step'''
solver_safety = 0.9

'''Largest time step in days, bounds the reaction term error'''
solver_max_dt = 0.01

'''Smallest admissible time step in days before the run is declared unstable'''
solver_min_dt = 1e-10

'''Scheme identifiers recorded in run manifests'''
residual_form = "expanded: D'(u)|grad u|^2 + D(u) lap u"
solver_scheme = "cell-centred finite volume, arithmetic-mean face D, no-flux, explicit RK4"
es_validation_components = "lambda_data*L_data + lambda_pde*L_pde"
