"""Mutable records of arrays shared between compiled kernels.

A structref is passed to compiled functions as a single pointer, which keeps
calls between small kernels cheap; a namedtuple of arrays is unpacked at every
call instead.

Reading a field inside compiled code returns a borrowed view of the array
whose meminfo is null, so no reference counting happens on the hot path.
The struct itself keeps the arrays alive.  Such a view must not escape the
kernel (returned to Python or stored elsewhere); the simulator kernels only
index into them.
"""
from __future__ import annotations

import sys

from numba.core import cgutils, types
from numba.core.datamodel import models
from numba.core.extending import NativeValue, box, infer_getattr, lower_getattr_generic, unbox
from numba.core.imputils import lower_setattr_generic
from numba.core.typing.templates import AttributeTemplate
from numba.experimental import structref
from numba.core.datamodel.registry import register_default


class _BorrowedModel(models.StructModel):
    """The struct pointer as a plain pointer, invisible to reference counting."""

    def __init__(self, dmm, fe_type):
        super().__init__(dmm, fe_type, [("meminfo", types.voidptr)])


def _register(struct_typeclass):
    register_default(struct_typeclass)(_BorrowedModel)

    @infer_getattr
    class _Attr(AttributeTemplate):
        key = struct_typeclass

        def generic_resolve(self, typ, attr):
            if attr in typ.field_dict:
                return typ.field_dict[attr]

    @lower_getattr_generic(struct_typeclass)
    def _getattr(context, builder, typ, val, attr):
        data = structref._Utils(context, builder, typ).get_data_struct(val)
        ret = getattr(data, attr)
        fieldtype = typ.field_dict[attr]
        if isinstance(fieldtype, types.Array):
            view = cgutils.create_struct_proxy(fieldtype)(context, builder, value=ret)
            view.meminfo = cgutils.get_null_value(view.meminfo.type)
            view.parent = cgutils.get_null_value(view.parent.type)
            return view._getvalue()
        context.nrt.incref(builder, fieldtype, ret)
        return ret

    @lower_setattr_generic(struct_typeclass)
    def _setattr(context, builder, sig, args, attr):
        inst_type, val_type = sig.args
        instance, val = args
        data = structref._Utils(context, builder, inst_type).get_data_struct(instance)
        casted = context.cast(builder, val, val_type, inst_type.field_dict[attr])
        old = getattr(data, attr)
        context.nrt.incref(builder, val_type, casted)
        context.nrt.decref(builder, val_type, old)
        setattr(data, attr, casted)

    return struct_typeclass


def _define_boxing(struct_typeclass, obj_class):
    obj_ctor = obj_class._numba_box_
    mip_type = types.MemInfoPointer(types.voidptr)

    # Only the constructor returns a struct to Python: the reference created by
    # the allocation is handed over to the proxy object.
    @box(struct_typeclass)
    def _box(typ, val, c):
        meminfo = structref._Utils(c.context, c.builder, typ).get_struct_ref(val).meminfo
        boxed_meminfo = c.box(mip_type, meminfo)
        ctor = c.pyapi.unserialize(c.pyapi.serialize_object(obj_ctor))
        ty = c.pyapi.unserialize(c.pyapi.serialize_object(typ))
        res = c.pyapi.call_function_objargs(ctor, [ty, boxed_meminfo])
        c.pyapi.decref(ctor)
        c.pyapi.decref(ty)
        c.pyapi.decref(boxed_meminfo)
        return res

    # Compiled code borrows the struct: the proxy keeps it alive during the call.
    @unbox(struct_typeclass)
    def _unbox(typ, obj, c):
        mi_obj = c.pyapi.object_getattr_string(obj, "_meminfo")
        mi = c.unbox(mip_type, mi_obj).value
        c.context.nrt.decref(c.builder, mip_type, mi)
        c.pyapi.decref(mi_obj)
        ref = structref._Utils(c.context, c.builder, typ).new_struct_ref(mi)
        return NativeValue(ref._getvalue())


def define_struct(name: str, fields, module: str):
    """Create a structref type ``<name>Type`` and proxy class ``name`` inside ``module``."""

    def preprocess_fields(self, fs):
        return tuple((n, types.unliteral(t)) for n, t in fs)

    type_cls = type(f"{name}Type", (types.StructRef,), {"preprocess_fields": preprocess_fields,
                                                       "__module__": module})
    _register(type_cls)
    proxy = type(name, (structref.StructRefProxy,), {"__module__": module, "_fields": tuple(fields)})
    structref.define_constructor(proxy, type_cls, list(fields))
    _define_boxing(type_cls, proxy)
    setattr(sys.modules[module], type_cls.__name__, type_cls)
    return proxy


def build(cls, **values):
    missing = set(cls._fields) - set(values)
    if missing:
        raise TypeError(f"{cls.__name__}: missing fields {sorted(missing)}")
    obj = cls(*[values[f] for f in cls._fields])
    # every field is an array sharing its buffer with the struct, so Python code
    # can read and write the same memory through plain attributes
    for f in cls._fields:
        setattr(obj, f, values[f])
    return obj
