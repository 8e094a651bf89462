/** Error kinds the CLI maps to exit codes: usage mistakes vs bad input data. */

export class UsageError extends Error {}

export class DataError extends Error {}

/** Malformed dense-feature files; a data problem with its own name. */
export class DnseFormatError extends DataError {}
