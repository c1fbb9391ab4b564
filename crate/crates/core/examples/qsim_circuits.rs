//! Angle encoding, a frozen random circuit and a parameter-shift gradient on
//! four qubits, cross-checked against the dense-matrix oracle.

use qcseis::qsim::{
    encode, encoded_expectation, expect, grad_expect_wrt_encoding, oracle, run_circuit, Observable, RandomCircuit,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = [0.3, -1.1, 0.7, 2.0];
    let z0 = Observable::pauli_z(0);

    let state = encode(&x)?;
    println!("product state <Z0> = {:+.6} (cos x0 = {:+.6})", expect(&state, &z0)?, x[0].cos());

    let circuit = RandomCircuit::generate(7, 0, 2, 4)?;
    println!("circuit seed {} depth {}:", circuit.seed(), circuit.depth());
    for (l, (angles, pairs)) in circuit.angles().iter().zip(circuit.entanglers()).enumerate() {
        let a: Vec<String> = angles.iter().map(|v| format!("{v:+.3}")).collect();
        println!("  layer {l}: ry [{}] then cnot {pairs:?}", a.join(", "));
    }

    let out = run_circuit(&state, &circuit)?;
    let dense = oracle::circuit_unitary(&circuit).apply(state.amplitudes());
    let dev = out.amplitudes().iter().zip(&dense).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("state vector vs dense unitary: max deviation {dev:.2e}, norm {:.15}", out.norm());

    let e = encoded_expectation(&x, &circuit, &z0)?;
    let g = grad_expect_wrt_encoding(&x, &circuit, &z0)?;
    println!("<Z0> after circuit = {e:+.6}");
    for (j, gj) in g.iter().enumerate() {
        let h = 1e-4;
        let mut p = x;
        p[j] += h;
        let mut m = x;
        m[j] -= h;
        let fd = (encoded_expectation(&p, &circuit, &z0)? - encoded_expectation(&m, &circuit, &z0)?) / (2.0 * h);
        println!("  d/dx{j}: shift {gj:+.8}  finite difference {fd:+.8}");
    }
    Ok(())
}
