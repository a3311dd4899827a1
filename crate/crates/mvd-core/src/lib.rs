//! Solver for the nonlinear McKendrick-von Foerster equation with
//! diffusion in age on (0,T) x (0,a_dagger):
//!
//! ```text
//! u_t + u_x + d(x, S(t)) u = eps u_xx
//! u(t,0) = g( int_0^a B(x) u(t,x) dx ),   u(t,a_dagger) = 0
//! S(t)   = int_0^a psi(x) u(t,x) dx
//! ```
//!
//! The scheme traces the transport part along characteristics with linear
//! interpolation at the foot, treats mortality explicitly and diffusion
//! implicitly (one tridiagonal solve per step), and evaluates the
//! nonlocal integrals with Newton-Cotes quadrature. The expected accuracy
//! is first order in h + dt; the `verify` module measures it.
//!
//! Modules:
//! - [`discretization`]: grid, stability checks, quadrature weights
//! - [`expr`]: expression language for config-defined coefficients
//! - [`scheme`]: the time-stepper itself
//! - [`models`]: builtin benchmark problems, residual oracle, mollifier
//! - [`verify`]: error measurement and convergence-order estimation
//! - [`dd`]: extended-precision scalar backing the residual oracle

pub mod dd;
pub mod discretization;
pub mod expr;
pub mod models;
pub mod par;
pub mod scheme;
pub mod verify;

pub use par::ExecMode;
