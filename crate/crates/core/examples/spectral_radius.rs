//! Finite-difference Jacobian of the fixed-point map on the first macro-step
//! against the closed form sqrt(D_SD / D_D).

use ifosmondi::testbench::{estimate_rho_numeric, jacobian_numeric, spectral_radius, MsdParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let jac = jacobian_numeric(&MsdParams::with_d_d(4.0), 1e-3, None)?;
    println!("J (order v_C, x_C, f_C and their derivatives), D_D = 4:{jac:.4}");
    println!("{:>8} {:>10} {:>10}", "D_D", "formula", "numeric");
    for d_d in [4.0, 2.5, 1.5625, 1.0, 0.64, 0.25, 0.04, 0.01] {
        let p = MsdParams::with_d_d(d_d);
        println!(
            "{d_d:>8} {:>10.4} {:>10.4}",
            spectral_radius(p.d_sd, d_d)?,
            estimate_rho_numeric(&p, 1e-3, None)?
        );
    }
    Ok(())
}
