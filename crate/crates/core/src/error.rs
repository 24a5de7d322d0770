use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("point outside declared domain: {0}")]
    DomainViolation(String),
    #[error("jet order {requested} exceeds configured maximum {max}")]
    OrderOverflow { requested: usize, max: usize },
    #[error("division by value of magnitude {0:.3e}")]
    DivisionNearZero(f64),
    #[error("argument must be positive: {0}")]
    NegativeArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("conformal factor vanishes")]
    ZeroConformalFactor,
    #[error("section is not invariant under the circle action (residual {0:.3e})")]
    NonInvariantSection(f64),
    #[error("endomorphism does not square to -Id (residual {0:.3e})")]
    NotAlmostComplex(f64),
    #[error("degenerate two-form (|det| = {0:.3e})")]
    DegenerateForm(f64),
    #[error("projector rank {found}, expected {expected}")]
    RankDeficiency { expected: usize, found: usize },
    #[error("singular value {sigma:.3e} lies in the ambiguity band around threshold {threshold:.3e}")]
    ToleranceAmbiguity { sigma: f64, threshold: f64 },
    #[error("structures do not commute (residual {0:.3e})")]
    NonCommuting(f64),
    #[error("generalized metric is not positive definite (min G(u,u) = {0:.3e})")]
    IndefiniteMetric(f64),
    #[error("frame X0, JX0, J2X0, J3X0 is degenerate at a sample")]
    DegenerateFrame,
    #[error("two computation paths disagree: {0}")]
    PathDisagreement(String),
    #[error("precondition not met: {0}")]
    PreconditionUnmet(String),
    #[error("verdicts disagree: {0}")]
    VerdictDisagreement(String),
    #[error("bivector incompatible with complex structure (residual {0:.3e})")]
    IncompatibleBivector(f64),
    #[error("hyper-Kähler relations fail (residual {0:.3e})")]
    NotHyperKahler(f64),
    #[error("singular input: {0}")]
    SingularInput(String),
    #[error("Hamiltonian function must be positive (value {0:.3e})")]
    NonPositiveHamiltonian(f64),
    #[error("Killing field vanishes (|X0| = {0:.3e})")]
    VanishingKillingField(f64),
    #[error("pr_T(J3 X0) does not vanish (residual {0:.3e})")]
    J3NotAForm(f64),
    #[error("Psi = Hess tau + C is singular (|det| = {0:.3e})")]
    SingularPsi(f64),
    #[error("potential is not strictly convex (min Hessian eigenvalue {0:.3e})")]
    NotConvex(f64),
    #[error("C12 = 0: E1 is not the full complexified tangent bundle")]
    KahlerDegenerate,
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("unknown potential `{0}`")]
    UnknownPotential(String),
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("type of the structure changes across samples: {0}")]
    MixedType(String),
    #[error("expression error: {0}")]
    ExpressionError(String),
    #[error("parse error at {line}:{col}: {msg}")]
    ParseError { line: usize, col: usize, msg: String },
    #[error("unknown key `{key}` at {line}:{col}")]
    UnknownKey { key: String, line: usize, col: usize },
    #[error("frame degeneracy: {0}")]
    FrameDegeneracy(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;
