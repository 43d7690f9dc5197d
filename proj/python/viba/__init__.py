"""Single-token boundary attacks, metrics, probes and defenses for NER
sequence taggers.

The heavy lifting lives in the compiled ``viba._core`` extension; this
package re-exports it and adds :mod:`viba.adapter`, a helper for serving any
Python tagger to the toolkit over the subprocess wire protocol.
"""

from viba._core import (  # noqa: F401
    DEFAULT_MASK_TOKEN,
    AttackRun,
    CapabilityError,
    CrfModel,
    CrfVictim,
    Dataset,
    Entity,
    ModelLoadError,
    ParseFileError,
    ProtocolError,
    Sentence,
    SubprocessVictim,
    TrainConfig,
    ValidationError,
    Victim,
    VictimError,
    __version__,
    attack_dataset,
    attack_sentence,
    boundary_inner_drop_probe,
    boundary_mask_augment,
    decode_entities,
    edit_distance,
    encode_entities,
    entity_probability,
    evaluate_f1,
    featurize,
    generate_corpus,
    load_conll,
    load_model,
    load_outcomes,
    mixed_adversarial_augment,
    parse_conll,
    repair_bio,
    representation_similarity_probe,
    run_defense_experiment,
    save_conll,
    semantic_similarity,
    train,
    viterbi,
    write_conll,
)
