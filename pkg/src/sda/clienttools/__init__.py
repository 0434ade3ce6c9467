"""Client tools: definitions manager, role manager, workflow desk, signer."""
