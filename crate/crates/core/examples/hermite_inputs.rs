//! How inputs are shaped across macro-steps.
//!
//! The first step starts from a constant; later steps reuse the value and
//! derivative at the previous step end so that inputs stay C¹, and the
//! solver's iterate fixes the value and derivative at the new step end.

use ifosmondi::polynomial::{InterfaceState, Step};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut iface = InterfaceState::new(0.0, vec![1.0]);
    let targets = [(1.5, 2.0), (1.0, -1.0), (0.2, 0.0)];
    let mut t = 0.0;
    for (i, &(v, d)) in targets.iter().enumerate() {
        let step = Step::new(t, t + 0.5)?;
        let (prime_mode, prime) = iface.build(step, None)?;
        let (mode, polys) = iface.build(step, Some((&[v], &[d])))?;
        let p = polys[0];
        println!(
            "step {i} [{:.1}, {:.1}): priming {prime_mode:?} (degree {}), solver {mode:?}",
            step.start,
            step.end,
            prime[0].degree()
        );
        println!(
            "    u({:.1}) = {:+.3}  u'({:.1}) = {:+.3}  ->  u({:.1}) = {:+.3}  u'({:.1}) = {:+.3}",
            step.start,
            p.eval(step.start),
            step.start,
            p.derivative(step.start),
            step.end,
            p.eval(step.end),
            step.end,
            p.derivative(step.end)
        );
        iface.commit();
        t = step.end;
    }
    Ok(())
}
