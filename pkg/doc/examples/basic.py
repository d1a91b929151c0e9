from ftprep.config import load_config
from ftprep.postsel import exact_statistics
from ftprep.prep import PrepTarget, build_prep_circuit, insert_error, outcome_probabilities

config = load_config()
noise = config.noise.circuit_noise()
target = PrepTarget.parse('00')
circuit = insert_error(build_prep_circuit(target), 'A', 0.5)

summary = exact_statistics(outcome_probabilities(circuit, noise), target)
print(f"acceptance {summary.acceptance:.4f}")
print(f"protected error {summary.p_err_protected:.4f}")
print(f"gauge error {summary.p_err_gauge:.4f}")
